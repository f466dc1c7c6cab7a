#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "spherecal/errors.hpp"
#include "spherecal/io.hpp"
#include "test_support.hpp"

using namespace spherecal;
using spherecal::testing::make_dataset;
using spherecal::testing::truth_network;

namespace {

const RunConfig kConfig = {{"command", "test"}, {"seed", "7"}, {"note", "a b=c"}};

template <class T, class W, class R>
void expect_byte_identical(const T& value, W write, R read) {
  std::ostringstream first;
  write(first, value);
  std::istringstream in(first.str());
  const auto back = read(in);
  std::ostringstream second;
  write(second, back);
  EXPECT_EQ(first.str(), second.str());
}

std::string error_of(const std::string& text, auto reader) {
  std::istringstream in(text);
  try {
    reader(in);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Format, DoublesRoundTripExactly) {
  std::mt19937_64 rng(81);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    EXPECT_EQ(parse_double(format_double(v), "v"), v);
  }
  EXPECT_THROW(parse_double("1.5x", "v"), DataError);
  EXPECT_THROW(parse_double("", "v"), DataError);
}

TEST(Format, ObservationsRoundTrip) {
  const SimulatedDataset d = make_dataset("gopro150", 3, 0.5);
  ObservationSet set;
  set.nominal = d.preset.nominal;
  set.label = "gopro150";
  set.rows = d.sim.observations;
  set.rows[3].sigma_y = 0.75;  // anisotropic row
  expect_byte_identical(set, [](std::ostream& o, const ObservationSet& s) { write_observations(o, s, kConfig); },
                        read_observations);
  std::ostringstream out;
  write_observations(out, set, kConfig);
  std::istringstream in(out.str());
  const ObservationSet back = read_observations(in);
  ASSERT_EQ(back.rows.size(), set.rows.size());
  EXPECT_EQ(back.rows[3].sigma_y, 0.75);
  EXPECT_EQ(back.rows[10].x, set.rows[10].x);
  std::istringstream cin(out.str());
  EXPECT_EQ(read_config(cin), kConfig);
}

TEST(Format, CorruptRowReportsLineNumber) {
  ObservationSet set;
  for (int i = 0; i < 30; ++i) {
    ImageObservation o;
    o.exposure = "E1";
    o.target = "T" + std::to_string(i);
    o.x = i;
    o.y = -i;
    o.sigma_x = o.sigma_y = 0.5;
    set.rows.push_back(o);
  }
  std::ostringstream out;
  write_observations(out, set, {});
  std::string text = out.str();
  // Replace the 17th line of the file.
  std::size_t pos = 0;
  for (int line = 1; line < 17; ++line) pos = text.find('\n', pos) + 1;
  text.replace(pos, text.find('\n', pos) - pos, "E1 T99 1.0 oops 0.5");
  const std::string msg = error_of(text, read_observations);
  EXPECT_NE(msg.find("line 17"), std::string::npos) << msg;
  EXPECT_NE(error_of("# format=spherecal-observations\nE1 T1 1 2\n", read_observations).find("line 2"),
            std::string::npos);
  EXPECT_NE(error_of("E1 T1 1 2 0.5\n", read_observations).find("not a spherecal-observations file"),
            std::string::npos);
}

TEST(Format, TargetsRoundTripAndValidate) {
  std::vector<TargetRow> rows = {{{"A", Vec3(1.0, 2.0, 3.0)}, false, Vec3::Zero(), false},
                                 {{"B", Vec3(0.1, 0.2, 0.3)}, true, Vec3(1e-3, 2e-3, 3e-3), true}};
  expect_byte_identical(rows, [](std::ostream& o, const std::vector<TargetRow>& r) { write_targets(o, r, kConfig); },
                        read_targets);
  const std::string header = "# format=spherecal-targets\n";
  EXPECT_NE(error_of(header + "A 1 2 3 0\nA 1 2 3 0\n", read_targets).find("duplicate"), std::string::npos);
  EXPECT_NE(error_of(header + "A 1 2 3 1\n", read_targets).find("no sigma"), std::string::npos);
  EXPECT_NE(error_of(header + "A 1 2 3 2\n", read_targets).find("line 2"), std::string::npos);
}

TEST(Format, TruthRoundTrip) {
  Preset p = make_preset("fisheye250", 2);
  p.noise.outlier_rate = 0.05;
  p.noise.outlier_magnitude = 30.0;
  const SimulatedDataset d = simulate(p);
  const TruthSet t = truth_set(d.sim);
  expect_byte_identical(t, [](std::ostream& o, const TruthSet& s) { write_truth(o, s, kConfig); }, read_truth);
  std::ostringstream out;
  write_truth(out, t, kConfig);
  EXPECT_NE(out.str().find("# source=oracle\n"), std::string::npos);
  std::istringstream in(out.str());
  const TruthSet back = read_truth(in);
  ASSERT_EQ(back.observations.size(), t.observations.size());
  for (std::size_t k = 0; k < t.observations.size(); ++k) {
    EXPECT_EQ(back.observations[k].outlier, t.observations[k].outlier);
    EXPECT_EQ(back.observations[k].hemisphere, t.observations[k].hemisphere);
  }
}

TEST(Format, NetworkResidualsAndExclusionsRoundTrip) {
  const SimulatedDataset d = make_dataset("ortho160", 4, 0.5);
  AdjustmentResult r;
  r.network = truth_network(d);
  r.network.brown.mask = BrownMask::parse("K1P2");
  r.network.brown[BrownTerm::K1] = 1.25e-9;
  r.cost = 1234.5;
  r.variance_factor = 0.987654321;
  r.redundancy = 3369;
  r.iterations = 12;
  r.converged = true;
  r.sigma_c = 0.1;
  r.sigma_brown[0] = 1e-11;
  const ResultRun run = result_run("XYZ, EOP, IOP, K1", r);
  expect_byte_identical(run, [](std::ostream& o, const ResultRun& x) { write_network(o, x, kConfig); },
                        read_network);

  for (std::size_t k = 0; k < d.sim.observations.size(); ++k) {
    r.residuals.emplace_back(0.1 * k, -0.2);
    r.weights.push_back(1.0 / (1.0 + k));
  }
  std::vector<Vec2> corr(d.sim.observations.size(), Vec2(0.5, -0.25));
  expect_byte_identical(residual_rows(d.sim.observations, r, corr),
                        [](std::ostream& o, const std::vector<ResidualRow>& x) { write_residuals(o, x, kConfig); },
                        read_residuals);

  const std::vector<ExclusionEntry> ex = {{"E001", "fewer than 4 usable targets (2)"},
                                          {"E017", "initialization failed for exposure"}};
  expect_byte_identical(ex, [](std::ostream& o, const std::vector<ExclusionEntry>& x) { write_exclusions(o, x, kConfig); },
                        read_exclusions);
  std::ostringstream out;
  write_exclusions(out, ex, kConfig);
  std::istringstream in(out.str());
  EXPECT_EQ(read_exclusions(in)[0].reason, ex[0].reason);
}

TEST(Format, CorrectionMapRoundTripPredictsIdentically) {
  std::mt19937_64 rng(82);
  std::uniform_real_distribution<double> u(-400.0, 400.0);
  CorrectionMap map;
  for (int layer = 0; layer < 2; ++layer) {
    std::vector<KnnSample> s(150);
    CorrectionLayer l;
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i].feature = Vec2(u(rng), u(rng));
      s[i].label = Vec2(u(rng), u(rng)) * 1e-3;
      s[i].weight = 4.0;
      if (layer == 0) l.keys.push_back(observation_key("E" + std::to_string(i % 7), "T" + std::to_string(i)));
    }
    l.regressor = KnnRegressor(s, 8);
    l.xp = 1.5 * layer;
    l.yp = -0.5;
    l.cv_score = 0.123;
    map.add_layer(l);
  }
  expect_byte_identical(map, [](std::ostream& o, const CorrectionMap& m) { write_correction_map(o, m, kConfig); },
                        read_correction_map);
  std::ostringstream out;
  write_correction_map(out, map, kConfig);
  std::istringstream in(out.str());
  const CorrectionMap back = read_correction_map(in);
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng), y = u(rng);
    EXPECT_EQ(back.correction(x, y), map.correction(x, y));
  }
  const std::string key = observation_key("E3", "T10");
  EXPECT_EQ(back.correction_for(key, 3.0, 4.0), map.correction_for(key, 3.0, 4.0));
}

TEST(Format, RunListRoundTrip) {
  const std::vector<std::string> labels = {"XYZ, EOP, IOP", "XYZ, EOP, IOP, kNN"};
  expect_byte_identical(labels, [](std::ostream& o, const std::vector<std::string>& l) { write_run_list(o, l, kConfig); },
                        read_run_list);
}
