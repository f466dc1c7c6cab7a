#pragma once

// Plain-text file formats. Every file starts with '#' comment lines holding
// key=value pairs; run settings are stored as "# config.<key>=<value>".
// Doubles are written with 17 significant digits, so write -> read -> write
// reproduces a file byte for byte. Parse errors throw DataError with the
// offending line number.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "spherecal/adjustment.hpp"
#include "spherecal/initialization.hpp"
#include "spherecal/knn.hpp"
#include "spherecal/oracle.hpp"

namespace spherecal {

// Settings of a command, echoed into every file it writes (sorted by key).
using RunConfig = std::map<std::string, std::string>;

// Ordered key=value header lines, without the config entries.
using Header = std::vector<std::pair<std::string, std::string>>;

std::string format_double(double v);
double parse_double(const std::string& text, const std::string& what);  // throws DataError

// Reads the "# config.*" entries of any file written by this library.
RunConfig read_config(std::istream& in);

// "# format=<format>" followed by the config entries; for plain outputs
// (tables, traces) that have no reader of their own.
void write_header(std::ostream& out, const std::string& format, const RunConfig& config);

// Index of a result bundle: one label per numbered run.
void write_run_list(std::ostream& out, const std::vector<std::string>& labels,
                    const RunConfig& config);
std::vector<std::string> read_run_list(std::istream& in);

struct ObservationSet {
  std::string units = "px";  // px or mm
  InteriorOrientation nominal;
  std::string label;
  std::vector<ImageObservation> rows;
};

void write_observations(std::ostream& out, const ObservationSet& set, const RunConfig& config);
ObservationSet read_observations(std::istream& in);

struct TargetRow {
  ObjectPoint point;
  bool has_sigma = false;
  Vec3 sigma = Vec3::Zero();  // metres
  bool control = false;
};

void write_targets(std::ostream& out, const std::vector<TargetRow>& rows, const RunConfig& config);
// Throws DataError for duplicate ids or control rows without sigmas.
std::vector<TargetRow> read_targets(std::istream& in);
std::vector<ObjectPoint> target_points(const std::vector<TargetRow>& rows);

// Oracle output: exact targets, poses and per-observation flags.
struct TruthObservation {
  std::string exposure;
  std::string target;
  bool outlier = false;
  double hemisphere = 1.0;
  double incidence = 0.0;  // radians
};

struct TruthSet {
  Header model;  // description of the generating camera
  std::vector<ObjectPoint> points;
  std::vector<std::string> exposures;
  std::vector<CameraPose> poses;
  std::vector<TruthObservation> observations;
};

TruthSet truth_set(const Simulation& sim);
void write_truth(std::ostream& out, const TruthSet& truth, const RunConfig& config);
TruthSet read_truth(std::istream& in);

// One adjusted network with its statistics.
struct ResultRun {
  std::string label;
  Network network;
  double cost = 0.0;
  double raw_cost = 0.0;
  double objective = 0.0;
  double variance_factor = 0.0;
  long redundancy = 0;
  int iterations = 0;
  bool converged = false;
  double sigma_c = 0.0, sigma_xp = 0.0, sigma_yp = 0.0;
  std::array<double, kBrownTermCount> sigma_brown{};
};

ResultRun result_run(const std::string& label, const AdjustmentResult& r);
void write_network(std::ostream& out, const ResultRun& run, const RunConfig& config);
ResultRun read_network(std::istream& in);

struct ResidualRow {
  ImageObservation observation;
  Vec2 residual = Vec2::Zero();  // adjusted - observed
  double weight = 1.0;           // Huber weight
  Vec2 correction = Vec2::Zero();  // fixed kNN correction applied
};

std::vector<ResidualRow> residual_rows(const std::vector<ImageObservation>& obs,
                                       const AdjustmentResult& r,
                                       const std::vector<Vec2>& corrections);
void write_residuals(std::ostream& out, const std::vector<ResidualRow>& rows,
                     const RunConfig& config);
std::vector<ResidualRow> read_residuals(std::istream& in);

void write_exclusions(std::ostream& out, const std::vector<ExclusionEntry>& rows,
                      const RunConfig& config);
std::vector<ExclusionEntry> read_exclusions(std::istream& in);

// Layers with header k, weighting and count; rows exposure, target (or "-"),
// xbar, ybar, dx, dy, weight.
void write_correction_map(std::ostream& out, const CorrectionMap& map, const RunConfig& config);
CorrectionMap read_correction_map(std::istream& in);

}  // namespace spherecal
