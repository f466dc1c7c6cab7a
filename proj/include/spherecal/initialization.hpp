#pragma once

#include <string>
#include <vector>

#include "spherecal/network.hpp"

namespace spherecal {

struct InitializationConfig {
  double gate_deg = 5.0;  // median angular error allowed for the chosen pose
  // Only observations with corrected radius below this fraction of c are used
  // for bearings (the rest are kept for the adjustment).
  double max_radius_fraction = 0.8;
  int max_triples = 20;  // triples tried per exposure, largest area first
};

struct ExclusionEntry {
  std::string exposure;
  std::string reason;
};

struct InitializationResult {
  Network network;
  std::vector<ImageObservation> observations;  // those usable with `network`
  std::vector<ExclusionEntry> excluded;
  std::vector<std::string> dropped_targets;  // seen by fewer than two exposures
};

// Unit bearing of an observation through the spherical back-projection with
// the given IOP and zero distortion (sign +1). False when the corrected point
// is not strictly inside the sphere.
bool nominal_bearing(const ImageObservation& obs, const InteriorOrientation& iop, Vec3& bearing);

// Poses from P3P on the largest-area triple (ties by target id, falling back
// to the next triples when the angular gate rejects all candidates), object
// points from the approximate coordinates, IOP nominal, Brown zero.
// Exposures with fewer than 4 usable targets, or with no triple passing the
// gate, are listed in `excluded`.
InitializationResult initialize_network(const std::vector<ObjectPoint>& approx_targets,
                                        const std::vector<ImageObservation>& obs,
                                        const InteriorOrientation& nominal,
                                        const InitializationConfig& cfg = {});

}  // namespace spherecal
