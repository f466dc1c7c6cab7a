#include "spherecal/brown.hpp"

#include <algorithm>
#include <cctype>

#include <Eigen/LU>

#include "spherecal/errors.hpp"

namespace spherecal {

namespace {
constexpr std::array<const char*, kBrownTermCount> kNames = {"K1", "K2", "K3", "P1",
                                                             "P2", "A1", "A2"};
}

const char* brown_term_name(BrownTerm t) { return kNames[static_cast<int>(t)]; }

BrownMask BrownMask::all() {
  BrownMask m;
  m.bits_ = (1u << kBrownTermCount) - 1;
  return m;
}

BrownMask BrownMask::ladder(int row) {
  static constexpr std::array<int, kLadderRows> kTerms = {0, 1, 2, 3, 5, 6, 7};
  if (row < 0 || row >= kLadderRows) throw ConfigError("ladder row out of range");
  BrownMask m;
  m.bits_ = (1u << kTerms[row]) - 1;
  return m;
}

BrownMask BrownMask::parse(const std::string& text) {
  std::string s;
  for (char ch : text)
    if (!std::isspace(static_cast<unsigned char>(ch)) && ch != ',')
      s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  BrownMask m;
  if (s.empty() || s == "NONE") return m;
  if (s == "ALL") return all();
  std::size_t pos = 0;
  while (pos < s.size()) {
    if (pos + 2 > s.size()) throw ConfigError("bad Brown term list: " + text);
    const std::string tok = s.substr(pos, 2);
    auto it = std::find_if(kNames.begin(), kNames.end(),
                           [&](const char* n) { return tok == n; });
    if (it == kNames.end()) throw ConfigError("unknown Brown term '" + tok + "'");
    m.set(static_cast<BrownTerm>(it - kNames.begin()));
    pos += 2;
  }
  return m;
}

void BrownMask::set(BrownTerm t, bool on) {
  const unsigned bit = 1u << static_cast<int>(t);
  bits_ = on ? (bits_ | bit) : (bits_ & ~bit);
}

int BrownMask::count() const {
  int n = 0;
  for (int i = 0; i < kBrownTermCount; ++i) n += (bits_ >> i) & 1u;
  return n;
}

std::string BrownMask::str() const {
  if (empty()) return "none";
  std::string s;
  for (int i = 0; i < kBrownTermCount; ++i)
    if (active(static_cast<BrownTerm>(i))) s += kNames[i];
  return s;
}

void BrownParams::enforce_mask() {
  for (int i = 0; i < kBrownTermCount; ++i)
    if (!mask.active(static_cast<BrownTerm>(i))) value[i] = 0.0;
}

Vec2 brown_correction(double x, double y, const InteriorOrientation& iop,
                      const BrownParams& p) {
  const double xb = x - iop.xp;
  const double yb = y - iop.yp;
  const double r2 = xb * xb + yb * yb;
  const double radial = p[BrownTerm::K1] * r2 + p[BrownTerm::K2] * r2 * r2 +
                        p[BrownTerm::K3] * r2 * r2 * r2;
  const double p1 = p[BrownTerm::P1];
  const double p2 = p[BrownTerm::P2];
  const double dx = xb * radial + p1 * (r2 + 2.0 * xb * xb) + 2.0 * p2 * xb * yb +
                    p[BrownTerm::A1] * xb + p[BrownTerm::A2] * yb;
  const double dy = yb * radial + 2.0 * p1 * xb * yb + p2 * (r2 + 2.0 * yb * yb);
  return {dx, dy};
}

BrownJacobian brown_jacobian(double xb, double yb, const BrownParams& p) {
  const double r2 = xb * xb + yb * yb;
  const double r4 = r2 * r2;
  const double r6 = r4 * r2;
  const double k1 = p[BrownTerm::K1], k2 = p[BrownTerm::K2], k3 = p[BrownTerm::K3];
  const double p1 = p[BrownTerm::P1], p2 = p[BrownTerm::P2];
  const double radial = k1 * r2 + k2 * r4 + k3 * r6;
  // d(radial)/d(r2)
  const double dradial = k1 + 2.0 * k2 * r2 + 3.0 * k3 * r4;

  BrownJacobian j;
  j.d_bar(0, 0) = radial + 2.0 * xb * xb * dradial + 6.0 * p1 * xb + 2.0 * p2 * yb +
                  p[BrownTerm::A1];
  j.d_bar(0, 1) = 2.0 * xb * yb * dradial + 2.0 * p1 * yb + 2.0 * p2 * xb +
                  p[BrownTerm::A2];
  j.d_bar(1, 0) = 2.0 * xb * yb * dradial + 2.0 * p1 * yb + 2.0 * p2 * xb;
  j.d_bar(1, 1) = radial + 2.0 * yb * yb * dradial + 2.0 * p1 * xb + 6.0 * p2 * yb;

  j.d_params.setZero();
  j.d_params.col(0) << xb * r2, yb * r2;
  j.d_params.col(1) << xb * r4, yb * r4;
  j.d_params.col(2) << xb * r6, yb * r6;
  j.d_params.col(3) << r2 + 2.0 * xb * xb, 2.0 * xb * yb;
  j.d_params.col(4) << 2.0 * xb * yb, r2 + 2.0 * yb * yb;
  j.d_params.col(5) << xb, 0.0;
  j.d_params.col(6) << yb, 0.0;
  return j;
}

bool invert_brown(const Vec2& target, const BrownParams& p, const Vec2& start, Vec2& u) {
  const InteriorOrientation origin{1.0, 0.0, 0.0};
  auto jacobian = [&](const Vec2& at) {
    return Eigen::Matrix2d(Eigen::Matrix2d::Identity() - brown_jacobian(at.x(), at.y(), p).d_bar);
  };
  u = start;
  const double scale = 1.0 + target.norm();
  bool converged = false;
  for (int it = 0; it < 50 && !converged; ++it) {
    const Vec2 f = u - brown_correction(u.x(), u.y(), origin, p) - target;
    if (f.norm() <= 1e-14 * scale) {
      converged = true;
      break;
    }
    const Vec2 du = jacobian(u).partialPivLu().solve(f);
    if (!du.allFinite()) return false;
    u -= du;
  }
  if (!converged) {
    const Vec2 f = u - brown_correction(u.x(), u.y(), origin, p) - target;
    if (!(f.norm() <= 1e-12 * scale)) return false;
  }
  // A root past a fold of the map is not the physical one.
  return jacobian(u).determinant() > 0.0;
}

}  // namespace spherecal
