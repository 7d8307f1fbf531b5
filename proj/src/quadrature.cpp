// SPDX-License-Identifier: Apache-2.0
#include "fcmg/quadrature.hpp"

#include <array>

#include "fcmg/common.hpp"

namespace fcmg {

namespace {

GaussRule make(std::initializer_list<double> xi, std::initializer_list<double> wi) {
  GaussRule r;
  r.n = static_cast<int>(xi.size());
  int k = 0;
  for (double x : xi) r.points[k++] = 0.5 * (x + 1.0);
  k = 0;
  for (double w : wi) r.weights[k++] = 0.5 * w;
  return r;
}

const std::array<GaussRule, 6> kRules{
    make({0.0}, {2.0}),
    make({-0.57735026918962576451, 0.57735026918962576451}, {1.0, 1.0}),
    make({-0.77459666924148337704, 0.0, 0.77459666924148337704},
         {0.55555555555555555556, 0.88888888888888888889, 0.55555555555555555556}),
    make({-0.86113631159405257522, -0.33998104358485626480, 0.33998104358485626480,
          0.86113631159405257522},
         {0.34785484513745385737, 0.65214515486254614263, 0.65214515486254614263,
          0.34785484513745385737}),
    make({-0.90617984593866399280, -0.53846931010568309104, 0.0, 0.53846931010568309104,
          0.90617984593866399280},
         {0.23692688505618908751, 0.47862867049936646804, 0.56888888888888888889,
          0.47862867049936646804, 0.23692688505618908751}),
    make({-0.93246951420315202781, -0.66120938646626451366, -0.23861918608319690863,
          0.23861918608319690863, 0.66120938646626451366, 0.93246951420315202781},
         {0.17132449237917034504, 0.36076157304813860757, 0.46791393457269104739,
          0.46791393457269104739, 0.36076157304813860757, 0.17132449237917034504}),
};

} // namespace

const GaussRule& gauss_rule(int n) {
  if (n < 1 || n > 6) throw InputError("Gauss rule order must be in 1..6");
  return kRules[static_cast<std::size_t>(n - 1)];
}

} // namespace fcmg
