// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

namespace fcmg {

/// Gauss-Legendre rule with n points on [0, 1] (weights sum to 1), n in 1..6.
struct GaussRule {
  int n = 0;
  double points[6] = {};
  double weights[6] = {};
};

const GaussRule& gauss_rule(int n);

} // namespace fcmg
