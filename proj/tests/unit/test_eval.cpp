#include <doctest.h>

#include <sstream>

#include "cellloc/error.hpp"
#include "cellloc/eval.hpp"
#include "cellloc/synth.hpp"

using namespace cellloc;

namespace {

std::vector<MeasurementSet> make_sets(std::size_t count, std::uint64_t seed) {
  const auto sc = Scenario::defaults();
  std::vector<MeasurementSet> sets;
  for (std::size_t i = 0; i < count; ++i) {
    auto ch = sc.channel;
    ch.seed = seed + i;
    sets.push_back(generate(sc.geometry, ch, sc.trajectory, "s" + std::to_string(i)));
  }
  return sets;
}

const std::vector<MeasurementSet>& four_sets() {
  static const auto sets = make_sets(4, 500);
  return sets;
}

}  // namespace

TEST_CASE("filter spec parsing") {
  CHECK(FilterSpec::parse("none") == FilterSpec::none());
  CHECK(FilterSpec::parse("median:5") == FilterSpec::median(5));
  CHECK(FilterSpec::parse("hmm") == FilterSpec::hmm());
  CHECK(FilterSpec::parse("hmm:forbid").forbid_jumps);
  CHECK(FilterSpec::parse("median:5").name() == "median:5");
  CHECK_THROWS_AS(FilterSpec::parse("median:x"), ConfigError);
  CHECK_THROWS_AS(FilterSpec::parse("kalman"), ConfigError);
}

TEST_CASE("report accuracy equals confusion trace over total") {
  const auto& sets = four_sets();
  const SplitPlan split{{"s0", "s1", "s2"}, "s3"};
  for (const char* f : {"none", "median:5", "hmm", "hmm:forbid"}) {
    PipelineConfig cfg;
    cfg.moment_L = 2;
    cfg.filter = FilterSpec::parse(f);
    const auto r = run_pipeline(sets, split, cfg);
    CHECK(r.accuracy == static_cast<double>(r.confusion.trace()) /
                            static_cast<double>(r.confusion.total()));
    CHECK(r.predictions.size() == sets[3].size());
    CHECK(r.hmm.has_value() == (cfg.filter.kind == FilterKind::hmm));
  }
}

TEST_CASE("no filter and L=1 equals the bare classifier") {
  const auto& sets = four_sets();
  const SplitPlan split{{"s1", "s2", "s3"}, "s0"};
  PipelineConfig cfg;
  const auto r = run_pipeline(sets, split, cfg);
  const auto knn = fit_stage1(sets, split, cfg);
  const auto y = knn.predict_all(raw_features(sets[0]));
  std::vector<Label> truth;
  for (const auto& f : sets[0].frames()) truth.push_back(*f.label);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(r.predictions[i].y_hat == y[i]);
    CHECK(r.predictions[i].z_hat == y[i]);
  }
  CHECK(r.accuracy == accuracy(truth, y));
  CHECK(r.stage1_accuracy == r.accuracy);
}

TEST_CASE("validation labels never influence training") {
  auto sets = four_sets();
  const SplitPlan split{{"s0", "s1", "s2"}, "s3"};
  PipelineConfig cfg;
  cfg.moment_L = 2;
  cfg.filter = FilterSpec::hmm();
  const auto before = run_pipeline(sets, split, cfg);
  auto frames = sets[3].frames();
  for (auto& f : frames) f.label = (*f.label + 1) % 3;
  sets[3] = MeasurementSet("s3", sets[3].node_labels(), frames);
  const auto after = run_pipeline(sets, split, cfg);
  CHECK(fit_stage1(four_sets(), split, cfg).to_json() == fit_stage1(sets, split, cfg).to_json());
  CHECK(*before.hmm == *after.hmm);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(before.predictions[i].z_hat == after.predictions[i].z_hat);
  }
}

TEST_CASE("pipeline errors") {
  const auto& sets = four_sets();
  PipelineConfig cfg;
  CHECK_THROWS(run_pipeline(sets, {{"s0", "s1"}, "s0"}, cfg));
  CHECK_THROWS_AS(run_pipeline(sets, {{"s0", "nope"}, "s3"}, cfg), ConfigError);
  cfg.moment_L = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("sweep means equal recomputation from individual reports") {
  const auto& sets = four_sets();
  SweepOptions opts;
  opts.splits = default_splits(sets);
  CHECK(opts.splits.size() == 4);
  opts.masks = {NodeMask::full(10), NodeMask::from_names({"I-E", "I-DR", "O-M", "O-DR"},
                                                         sets[0].node_labels())};
  opts.jobs = 3;
  const std::vector<FilterSpec> filters{FilterSpec::none(), FilterSpec::hmm()};
  const auto res = sweep_L(sets, {1, 2}, filters, opts);
  REQUIRE(res.rows.size() == 4);
  CHECK(res.cells.size() == 2 * 2 * 4 * 2);
  for (const auto& row : res.rows) {
    double sum = 0;
    for (const auto& mask : opts.masks) {
      for (const auto& split : opts.splits) {
        PipelineConfig cfg;
        cfg.node_mask = mask;
        cfg.moment_L = row.moment_L;
        cfg.filter = row.filter;
        sum += run_pipeline(sets, split, cfg).accuracy;
      }
    }
    CHECK(row.cells == 8);
    CHECK(row.mean_accuracy == doctest::Approx(sum / 8).epsilon(1e-12));
  }
  opts.jobs = 1;
  const auto serial = sweep_L(sets, {1, 2}, filters, opts);
  std::ostringstream a, b;
  write_l_sweep_csv(a, res);
  write_l_sweep_csv(b, serial);
  CHECK(a.str() == b.str());
}

TEST_CASE("singleton sweep equals run_pipeline") {
  const auto& sets = four_sets();
  SweepOptions opts;
  opts.splits = {{{"s0", "s1", "s2"}, "s3"}};
  const auto res = sweep_L(sets, {1}, {FilterSpec::none()}, opts);
  REQUIRE(res.rows.size() == 1);
  CHECK(res.rows[0].mean_accuracy == run_pipeline(sets, opts.splits[0], {}).accuracy);
  CHECK_THROWS(sweep_L(sets, {}, {FilterSpec::none()}, opts));
}

TEST_CASE("mask sweep on four nodes") {
  auto sets = four_sets();
  const auto m = NodeMask::from_names({"I-E", "I-DR", "O-M", "O-DR"}, sets[0].node_labels());
  for (auto& s : sets) s = select_nodes(s, m);
  SweepOptions opts;
  opts.splits = {{{"s0", "s1", "s2"}, "s3"}, {{"s1", "s2", "s3"}, "s0"}};
  const auto res = sweep_node_masks(sets, 2, FilterSpec::none(), opts, 0.1);
  CHECK(res.rows.size() == 15);
  std::size_t full = 0, total = 0;
  for (const auto& r : res.rows) full += r.mask == NodeMask::full(4);
  for (auto c : res.histogram.counts) total += c;
  CHECK(full == 1);
  CHECK(total == 15);
  CHECK(res.histogram.counts.size() == 10);
}

TEST_CASE("histogram bins") {
  const auto h = make_histogram({0.0, 0.05, 0.1, 0.95, 1.0}, 0.1);
  CHECK(h.counts.size() == 10);
  CHECK(h.counts[0] == 2);
  CHECK(h.counts[1] == 1);
  CHECK(h.counts[9] == 2);
}

TEST_CASE("mask sweep refuses too many nodes") {
  std::vector<std::string> names;
  std::vector<double> row;
  for (int i = 0; i < 17; ++i) {
    names.push_back("n" + std::to_string(i));
    row.push_back(-50);
  }
  std::vector<MeasurementSet> sets;
  for (int s = 0; s < 2; ++s) {
    sets.emplace_back("x" + std::to_string(s), names,
                      std::vector<RssiFrame>{{0, row, 0}, {1, row, 1}});
  }
  SweepOptions opts;
  CHECK_THROWS_AS(sweep_node_masks(sets, 1, FilterSpec::none(), opts), ConfigError);
}

TEST_CASE("report serialization is deterministic") {
  const auto& sets = four_sets();
  PipelineConfig cfg;
  cfg.moment_L = 2;
  cfg.filter = FilterSpec::hmm();
  const SplitPlan split{{"s0", "s1", "s2"}, "s3"};
  const auto a = report_to_json(run_pipeline(sets, split, cfg));
  CHECK(a == report_to_json(run_pipeline(sets, split, cfg)));
  std::ostringstream csv;
  write_predictions_csv(csv, run_pipeline(sets, split, cfg));
  CHECK(csv.str().rfind("t,truth,y_hat,z_hat\n", 0) == 0);
}
