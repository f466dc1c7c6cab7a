#include "spherecal/initialization.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <tuple>
#include <unordered_map>

#include "spherecal/errors.hpp"
#include "spherecal/p3p.hpp"

namespace spherecal {

bool nominal_bearing(const ImageObservation& obs, const InteriorOrientation& iop, Vec3& bearing) {
  const double x = obs.x - iop.xp, y = obs.y - iop.yp;
  if (!(x * x + y * y < iop.c * iop.c)) return false;
  bearing = sphere_bearing(x, y, iop.c, 1.0);
  return true;
}

InitializationResult initialize_network(const std::vector<ObjectPoint>& targets,
                                        const std::vector<ImageObservation>& obs,
                                        const InteriorOrientation& nominal,
                                        const InitializationConfig& cfg) {
  if (!(nominal.c > 0.0)) throw ConfigError("nominal principal distance must be positive");
  std::unordered_map<std::string, std::size_t> tindex;
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (!tindex.emplace(targets[i].id, i).second)
      throw DataError("duplicate target id " + targets[i].id);

  std::vector<std::string> exp_order;
  std::unordered_map<std::string, std::vector<std::size_t>> by_exp;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    if (!tindex.count(obs[k].target))
      throw DataError("observation of target without approximate coordinates: " + obs[k].target);
    auto [it, fresh] = by_exp.try_emplace(obs[k].exposure);
    if (fresh) exp_order.push_back(obs[k].exposure);
    it->second.push_back(k);
  }

  InitializationResult res;
  const double gate = cfg.gate_deg * std::numbers::pi / 180.0;
  const double rmax = cfg.max_radius_fraction * nominal.c;
  std::vector<std::string> kept_exposures;
  std::vector<CameraPose> kept_poses;

  for (const auto& eid : exp_order) {
    struct Usable {
      const std::string* id;
      Vec3 point, bearing;
    };
    std::vector<Usable> use;
    for (std::size_t k : by_exp[eid]) {
      Vec3 b;
      const double x = obs[k].x - nominal.xp, y = obs[k].y - nominal.yp;
      if (x * x + y * y >= rmax * rmax) continue;
      if (!nominal_bearing(obs[k], nominal, b)) continue;
      use.push_back({&obs[k].target, targets[tindex[obs[k].target]].coords, b});
    }
    std::sort(use.begin(), use.end(), [](const Usable& a, const Usable& b) { return *a.id < *b.id; });
    if (use.size() < 4) {
      res.excluded.push_back({eid, "fewer than 4 usable targets (" + std::to_string(use.size()) + ")"});
      continue;
    }

    using Triple = std::tuple<double, std::size_t, std::size_t, std::size_t>;
    std::vector<Triple> triples;
    const std::size_t n = use.size();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const Vec3 e1 = use[j].point - use[i].point;
        for (std::size_t k = j + 1; k < n; ++k)
          triples.emplace_back(0.5 * e1.cross(use[k].point - use[i].point).norm(), i, j, k);
      }
    const std::size_t take = std::min<std::size_t>(triples.size(), std::max(cfg.max_triples, 1));
    auto order = [](const Triple& a, const Triple& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      return std::tie(std::get<1>(a), std::get<2>(a), std::get<3>(a)) <
             std::tie(std::get<1>(b), std::get<2>(b), std::get<3>(b));
    };
    std::partial_sort(triples.begin(), triples.begin() + static_cast<std::ptrdiff_t>(take),
                      triples.end(), order);

    bool done = false;
    for (std::size_t t = 0; t < take && !done; ++t) {
      const auto [area, i, j, k] = triples[t];
      if (!(area > 0.0)) break;
      try {
        auto cands = p3p_solve({use[i].point, use[j].point, use[k].point},
                               {use[i].bearing, use[j].bearing, use[k].bearing});
        std::vector<Vec3> pts, brs;
        for (std::size_t m = 0; m < n; ++m)
          if (m != i && m != j && m != k) {
            pts.push_back(use[m].point);
            brs.push_back(use[m].bearing);
          }
        const std::size_t best = disambiguate(cands, pts, brs, gate);
        kept_exposures.push_back(eid);
        kept_poses.push_back(cands[best].pose);
        done = true;
      } catch (const DegenerateInput&) {
      }
    }
    if (!done) res.excluded.push_back({eid, "initialization failed for exposure"});
  }

  // targets need two rays from retained exposures
  std::unordered_map<std::string, int> rays;
  std::unordered_map<std::string, bool> kept_exp;
  for (const auto& e : kept_exposures) kept_exp[e] = true;
  for (const auto& o : obs)
    if (kept_exp.count(o.exposure)) ++rays[o.target];

  res.network.exposures = kept_exposures;
  res.network.poses = kept_poses;
  res.network.iop = nominal;
  for (const auto& t : targets) {
    const auto it = rays.find(t.id);
    if (it != rays.end() && it->second >= 2)
      res.network.points.push_back(t);
    else if (it != rays.end())
      res.dropped_targets.push_back(t.id);
  }
  std::unordered_map<std::string, bool> kept_pt;
  for (const auto& p : res.network.points) kept_pt[p.id] = true;
  for (const auto& o : obs)
    if (kept_exp.count(o.exposure) && kept_pt.count(o.target)) res.observations.push_back(o);
  return res;
}

}  // namespace spherecal
