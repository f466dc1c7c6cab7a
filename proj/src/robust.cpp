#include "spherecal/robust.hpp"

#include <cmath>

#include "spherecal/errors.hpp"

namespace spherecal {

double huber_weight(double r, double c) {
  if (!(c > 0.0)) throw ConfigError("Huber constant must be positive");
  const double a = std::abs(r);
  return a <= c ? 1.0 : c / a;
}

double huber_loss(double r, double c) {
  if (!(c > 0.0)) throw ConfigError("Huber constant must be positive");
  const double a = std::abs(r);
  return a <= c ? a * a : 2.0 * c * a - c * c;
}

}  // namespace spherecal
