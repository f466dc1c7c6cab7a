#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "spherecal/geometry.hpp"

namespace spherecal {

// truth ~= scale * rotation * estimated + translation
struct Alignment {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;
  double rms_residual = 0.0;  // of the alignment itself, metres
};

Vec3 apply_alignment(const Alignment& a, const Vec3& p);

// Least-squares rigid (or similarity) transform from `estimated` onto
// `truth`. Throws DegenerateInput("alignment underdetermined") for fewer than
// three points or collinear points.
Alignment rigid_align(const std::vector<Vec3>& estimated, const std::vector<Vec3>& truth,
                      bool with_scale = false);

struct Rmse {
  double x = 0.0, y = 0.0, z = 0.0, total = 0.0;  // millimetres
};

// Per-axis and 3-D RMSE of aligned points against truth (metres in, mm out).
Rmse rmse_xyz(const std::vector<Vec3>& aligned, const std::vector<Vec3>& truth);

struct Line {
  double slope = 0.0, intercept = 0.0;
};

struct RadialTrend {
  Line x, y;
};

// OLS line of each residual coordinate against radial distance. Throws
// DegenerateInput when all radii are equal.
RadialTrend radial_trend(const std::vector<Vec2>& residuals, const std::vector<double>& radius);

struct Histogram {
  double bin_width = 0.0;
  double origin = 0.0;  // lower edge of bin 0, a multiple of bin_width
  std::vector<std::size_t> counts;
  std::size_t n = 0;
  double mean = 0.0, stddev = 0.0, skewness = 0.0;
};

// Throws ConfigError for a non-positive bin width.
Histogram residual_histogram(const std::vector<double>& values, double bin_width);

struct AssessmentReport {
  std::string label;
  Rmse rmse;
  double cost = 0.0;
  double variance_factor = 0.0;
  Histogram hist_x, hist_y;
  RadialTrend trend;
  Alignment alignment;
  std::size_t points = 0;
};

struct AssessmentInput {
  std::string label;
  std::vector<ObjectPoint> estimated;
  std::vector<ImageObservation> observations;
  std::vector<Vec2> residuals;  // one per observation
  InteriorOrientation iop;      // for radial distances
  double cost = 0.0;
  double variance_factor = 0.0;
};

struct AssessmentConfig {
  double bin_width = 0.1;
  bool with_scale = false;
};

// Aligns the estimated points with truth by id and summarises the run.
// Throws DataError naming every estimated id absent from truth.
AssessmentReport assess(const AssessmentInput& in, const std::vector<ObjectPoint>& truth,
                        const AssessmentConfig& cfg = {});

// Table layout: model, image-space error, RMSE X Y Z and 3-D in mm.
void write_table(std::ostream& out, const std::vector<AssessmentReport>& rows);
void write_table_csv(std::ostream& out, const std::vector<AssessmentReport>& rows);
// Two-column files: bin centre and count; radius and residual.
void write_histogram(std::ostream& out, const Histogram& h);
void write_residual_radius(std::ostream& out, const std::vector<Vec2>& residuals,
                           const std::vector<double>& radius, int coordinate);

}  // namespace spherecal
