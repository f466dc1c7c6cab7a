#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spherecal/adjustment.hpp"
#include "spherecal/initialization.hpp"
#include "spherecal/knn.hpp"

namespace spherecal {

struct KnnLoopConfig {
  int max_outer = 20;
  double stability_tolerance = 1e-3;  // relative change of cost and CV score
  std::vector<std::size_t> k_ladder = default_k_ladder();
  std::uint64_t cv_seed = kDefaultCvSeed;
  double outlier_weight = 0.5;  // samples with a lower Huber weight are not learned
  std::size_t trend_k = 8;      // neighbours of the local trend used for screening
};

struct PipelineConfig {
  AdjustmentConfig adjustment;
  InitializationConfig initialization;
  KnnLoopConfig knn;
};

// Table row label, e.g. "XYZ, EOP, IOP, K1, K2".
std::string model_label(const BrownMask& mask);
inline constexpr const char* kKnnLabel = "XYZ, EOP, IOP, kNN";

struct CalibrationRun {
  std::string label;
  AdjustmentResult result;
  std::vector<ImageObservation> observations;  // as used in the adjustment
  std::vector<ExclusionEntry> excluded;
};

struct OuterRecord {
  int outer = 0;
  double cost = 0.0;        // weighted image-space error of the solve
  double cv_score = 0.0;    // best CV score of the field fitted afterwards
  double zero_score = 0.0;  // same metric for keeping the current corrections
  std::size_t k = 0;
  std::size_t samples = 0;
  bool layer_added = false;
};

struct KnnRun {
  CalibrationRun run;
  CorrectionMap map;                // the map used by run.result
  std::vector<Vec2> corrections;    // per observation of run
  std::vector<OuterRecord> trace;
  int best_outer = 0;
  bool oscillation = false;
};

// Initialisation, then one adjustment estimating XYZ, EOP, IOP and `mask`.
CalibrationRun calibrate_conventional(const std::vector<ImageObservation>& obs,
                                      const std::vector<ObjectPoint>& approx_targets,
                                      const InteriorOrientation& nominal, const BrownMask& mask,
                                      const PipelineConfig& cfg);

// All ladder rows in order. Each row starts from the initial network; when
// that ends above the previous row's objective, the previous solution is
// tried as a start too and the better result is kept.
std::vector<CalibrationRun> calibrate_ladder(const std::vector<ImageObservation>& obs,
                                             const std::vector<ObjectPoint>& approx_targets,
                                             const InteriorOrientation& nominal,
                                             const PipelineConfig& cfg);

// Alternates adjustment with fixed corrections and a kNN map refitted to the
// corrections plus the new residuals.
KnnRun calibrate_knn(const std::vector<ImageObservation>& obs,
                     const std::vector<ObjectPoint>& approx_targets,
                     const InteriorOrientation& nominal, const PipelineConfig& cfg);

// Per-observation corrections of a frozen map (training observations leave
// their own sample out).
std::vector<Vec2> map_corrections(const CorrectionMap& map,
                                  const std::vector<ImageObservation>& obs);

void write_outer_trace(std::ostream& out, const std::vector<OuterRecord>& trace);

}  // namespace spherecal
