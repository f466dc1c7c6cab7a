#pragma once

#include <array>
#include <string>

#include <Eigen/Core>

#include "spherecal/geometry.hpp"

namespace spherecal {

// Brown additional parameters in ladder order.
enum class BrownTerm { K1 = 0, K2, K3, P1, P2, A1, A2 };
inline constexpr int kBrownTermCount = 7;

const char* brown_term_name(BrownTerm t);

// Set of estimated terms. Inactive terms are held at exactly zero.
class BrownMask {
 public:
  BrownMask() = default;

  static BrownMask none() { return {}; }
  static BrownMask all();
  // Ladder row `row` in 0..6: none, K1, K1K2, K1K2K3, +P1P2, +A1, +A2.
  static BrownMask ladder(int row);
  // Parses "none", "K1K2", "K1,K2,P1", ... Throws ConfigError.
  static BrownMask parse(const std::string& text);

  bool active(BrownTerm t) const { return bits_ & (1u << static_cast<int>(t)); }
  void set(BrownTerm t, bool on = true);
  int count() const;
  bool empty() const { return bits_ == 0; }
  std::string str() const;  // "K1K2P1P2", or "none"

  bool operator==(const BrownMask&) const = default;

 private:
  unsigned bits_ = 0;
};

inline constexpr int kLadderRows = 7;

struct BrownParams {
  std::array<double, kBrownTermCount> value{};  // K1 K2 K3 P1 P2 A1 A2
  BrownMask mask;

  double& operator[](BrownTerm t) { return value[static_cast<int>(t)]; }
  double operator[](BrownTerm t) const { return value[static_cast<int>(t)]; }

  // Zeroes every inactive term.
  void enforce_mask();
};

// (dx, dy) at image position (x, y); xbar = x - xp, ybar = y - yp.
Vec2 brown_correction(double x, double y, const InteriorOrientation& iop,
                      const BrownParams& p);

struct BrownJacobian {
  Eigen::Matrix2d d_bar;                           // d(dx,dy)/d(xbar,ybar)
  Eigen::Matrix<double, 2, kBrownTermCount> d_params;  // d(dx,dy)/d(K1..A2)
};

// Derivatives at reduced coordinates (xbar, ybar). d_params ignores the mask.
BrownJacobian brown_jacobian(double xbar, double ybar, const BrownParams& p);

// Solves u - delta(u) = target for reduced coordinates u by Newton's method,
// starting from `start`. Returns false if it fails to converge to a relative
// 1e-14 within 50 iterations, or if the root lies past a fold of the map
// (det(I - d delta/du) <= 0); `u` then holds the last iterate.
bool invert_brown(const Vec2& target, const BrownParams& p, const Vec2& start, Vec2& u);

}  // namespace spherecal
