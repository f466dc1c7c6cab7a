#pragma once

namespace spherecal {

inline constexpr double kHuberDefault = 1.345;

// IRLS weight for a standardised residual: 1 inside [-c, c], c/|r| outside.
double huber_weight(double r, double c);

// Huber loss scaled so that it equals r^2 inside the threshold:
// r^2 for |r| <= c, 2c|r| - c^2 outside.
double huber_loss(double r, double c);

}  // namespace spherecal
