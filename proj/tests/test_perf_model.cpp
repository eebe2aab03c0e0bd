#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "plexuskit/perf_model.hpp"
#include "plexuskit/rng.hpp"
#include "test_helpers.hpp"

using namespace plexuskit;
using namespace pxt;

namespace {

// ogbn-products published stats: 2,449,029 nodes, 126,167,053 nonzeros,
// 100 input features, 47 classes, hidden 128
DatasetStats products_stats() {
  return {2449029, 126167053, {100, 128, 128, 47}};
}

std::vector<RegressionSample> synth_samples(const std::array<double, 3>& c,
                                            double noise, u64 seed,
                                            std::size_t count) {
  Philox rng(seed, 0);
  std::vector<RegressionSample> out;
  std::vector<DatasetStats> datasets = {
      products_stats(),
      {232965, 114848857, {602, 128, 128, 41}},
      {8745542, 1317986044, {128, 128, 128, 32}},
      {50912018, 159021338, {128, 128, 128, 32}},
  };
  while (out.size() < count) {
    const auto& stats = datasets[rng.randint(datasets.size())];
    const int g = 1 << (3 + rng.randint(5));  // 8..128 ranks
    auto configs = enumerate_configs(g);
    const auto shape = configs[rng.randint(configs.size())];
    RegressionSample s;
    s.features = comp_features(stats, shape).f;
    s.seconds = c[0] * s.features[0] + c[1] * s.features[1] + c[2] * s.features[2];
    if (noise > 0) s.seconds *= 1.0 + noise * (2.0 * rng.next_double() - 1.0);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("perf_model");

TEST_CASE("comp_features: published layer-0 flops cost for ogbn-products") {
  DatasetStats one_layer{2449029, 126167053, {100, 47}};
  auto f = comp_features(one_layer, {1, 1, 1});
  CHECK(f.f[0] * f.f[0] == doctest::Approx(1.26167053e10).epsilon(1e-12));
}

TEST_CASE("comp_features: forward penalty formula") {
  DatasetStats one_layer{2449029, 126167053, {100, 47}};
  auto f = comp_features(one_layer, {64, 1, 1});
  // fwd = (N/Gx)*(Gy/D) = 2449029/64/100
  CHECK(f.f[1] / f.f[0] == doctest::Approx(382.66078125).epsilon(1e-12));
  // bwd penalty uses the row-shard axis (Gz=1 here)
  CHECK(f.f[2] / f.f[0] == doctest::Approx(24490.29).epsilon(1e-6));
}

TEST_CASE("comp_features: serial grid reduces penalties to N/D") {
  DatasetStats one_layer{1000, 5000, {25, 10}};
  auto f = comp_features(one_layer, {1, 1, 1});
  CHECK(f.f[1] / f.f[0] == doctest::Approx(1000.0 / 25.0).epsilon(1e-12));
  CHECK(f.f[2] / f.f[0] == doctest::Approx(1000.0 / 25.0).epsilon(1e-12));
  CHECK_THROWS_AS(comp_features({0, 5, {4, 2}}, {1, 1, 1}), ContractError);
  CHECK_THROWS_AS(comp_features({10, 5, {4, 0}}, {1, 1, 1}), ContractError);
}

TEST_CASE("elements x per-element flops equals 2*NNZ*D/G for every config") {
  DatasetStats stats{2449029, 126167053, {100, 47}};
  for (const auto& s : enumerate_configs(64)) {
    const double elems = (static_cast<double>(stats.n) / s.gz) *
                         (static_cast<double>(stats.dims[0]) / s.gy);
    const double per_elem =
        2.0 * static_cast<double>(stats.nnz) / (static_cast<double>(stats.n) * s.gx);
    const double expect = 2.0 * static_cast<double>(stats.nnz) * stats.dims[0] /
                          (static_cast<double>(s.gx) * s.gy * s.gz);
    CHECK(elems * per_elem == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("predict_spmm_time: zero features, clamping, sqrt scaling") {
  PerfCoefficients c{1.0, 1.0, 1.0, 0, 0};
  CHECK(predict_spmm_time({{0, 0, 0}}, c).seconds == 0.0);

  PerfCoefficients neg{-1.0, 0, 0, 0, 0};
  auto clamped = predict_spmm_time({{5, 0, 0}}, neg);
  CHECK(clamped.seconds == 0.0);
  CHECK(clamped.clamped);

  DatasetStats base{100000, 1000000, {64, 8}};
  DatasetStats doubled{100000, 2000000, {64, 8}};
  PerfCoefficients c1{1.0, 0, 0, 0, 0};
  auto t1 = predict_spmm_time(comp_features(base, {2, 2, 2}), c1);
  auto t2 = predict_spmm_time(comp_features(doubled, {2, 2, 2}), c1);
  CHECK(t2.seconds / t1.seconds == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("paper coefficients: common-dim sharding beats tall-skinny") {
  // config U: Gx=64 (common dimension sharded); config V: Gy=64 (tall-skinny)
  auto stats = products_stats();
  auto coeffs = default_coefficients();
  auto u = predict_spmm_time(comp_features(stats, {64, 1, 1}), coeffs);
  auto v = predict_spmm_time(comp_features(stats, {1, 64, 1}), coeffs);
  CHECK(u.seconds < v.seconds);
}

TEST_CASE("effective_bandwidth: intra-node, shared-NIC and single-rank cases") {
  MachineParams m;
  m.g_node = 4;
  m.beta_intra = 200e9;
  m.beta_inter = 25e9;

  // whole grid inside one node: every axis intra
  for (Axis a : {Axis::X, Axis::Y, Axis::Z})
    CHECK(effective_bandwidth(a, {2, 2, 1}, m) == 200e9);

  // Z axis with Gx*Gy = 4 = G_node: beta_inter / 4
  CHECK(effective_bandwidth(Axis::Z, {2, 2, 4}, m) ==
        doctest::Approx(25e9 / 4).epsilon(1e-12));

  // Y packs first: fits in the node while X and Z go through the NIC
  CHECK(effective_bandwidth(Axis::Y, {4, 4, 1}, m) == 200e9);
  CHECK(effective_bandwidth(Axis::X, {4, 4, 1}, m) ==
        doctest::Approx(25e9 / 4).epsilon(1e-12));

  // one rank per node: every multi-member axis is inter at full rate
  MachineParams solo = m;
  solo.g_node = 1;
  CHECK(effective_bandwidth(Axis::X, {4, 4, 4}, solo) == 25e9);
  CHECK(effective_bandwidth(Axis::Y, {4, 4, 4}, solo) == 25e9);
  // singleton axes never send
  CHECK(effective_bandwidth(Axis::Z, {4, 4, 1}, solo) == solo.beta_intra);
}

TEST_CASE("ring_collective_seconds: the 6e-3 worked example") {
  const double t = ring_collective_seconds(CollOp::AllReduce, 1e8, 4, 25e9);
  CHECK(std::abs(t - 6e-3) <= 1e-12);
  CHECK(ring_collective_seconds(CollOp::AllReduce, 1e8, 1, 25e9) == 0.0);
  // gather and scatter cost half of all-reduce
  CHECK(ring_collective_seconds(CollOp::AllGather, 1e8, 4, 25e9) ==
        doctest::Approx(3e-3).epsilon(1e-12));
  // linear in M
  CHECK(ring_collective_seconds(CollOp::AllReduce, 2e8, 4, 25e9) ==
        doctest::Approx(2 * t).epsilon(1e-12));
}

TEST_CASE("predict_comm_time: serial grid is exactly zero") {
  DatasetStats stats{256, 3000, {16, 8, 4}};
  MachineParams m;
  CHECK(predict_comm_time({1, 1, 1}, stats, m).total == 0.0);
}

TEST_CASE("predict_comm_time scales inversely with bandwidth") {
  DatasetStats stats{4096, 80000, {32, 16, 8}};
  MachineParams m;
  m.g_node = 2;
  auto base = predict_comm_time({2, 2, 2}, stats, m);
  MachineParams fast = m;
  fast.beta_intra *= 2;
  fast.beta_inter *= 2;
  auto halved = predict_comm_time({2, 2, 2}, stats, fast);
  CHECK(halved.total == doctest::Approx(base.total / 2).epsilon(1e-12));
  CHECK(base.total > 0);
}

TEST_CASE("fit_regression: exact recovery from noiseless data") {
  const std::array<double, 3> truth{7.8e-4, 7.8e-10, -2.6e-10};
  auto samples = synth_samples(truth, 0.0, 3, 40);
  auto fit = fit_regression(samples);
  CHECK(rel_diff(fit.c1, truth[0]) <= 1e-9);
  CHECK(rel_diff(fit.c2, truth[1]) <= 1e-9);
  CHECK(rel_diff(fit.c3, truth[2]) <= 1e-9);
  CHECK(fit.train_r2 == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fit_regression: 5% noise on 67 samples keeps R2 high") {
  const std::array<double, 3> truth{7.8e-4, 7.8e-10, -2.6e-10};
  auto samples = synth_samples(truth, 0.05, 7, 67);
  auto fit = fit_regression(samples);
  CHECK(fit.train_r2 >= 0.85);
  auto split = fit_with_split(samples, 0.7, 11);
  CHECK(split.test_r2 >= 0.7);
}

TEST_CASE("fit_regression: degenerate inputs are rejected") {
  const std::array<double, 3> truth{1.0, 2.0, 3.0};
  auto two = synth_samples(truth, 0.0, 5, 2);
  CHECK_THROWS_AS(fit_regression(two), ContractError);

  // rank-deficient: every sample has identical features
  std::vector<RegressionSample> flat(10, {{1.0, 2.0, 3.0}, 6.0});
  CHECK_THROWS_AS(fit_regression(flat), ContractError);
}

TEST_CASE("fit_regression is invariant to sample order") {
  const std::array<double, 3> truth{2e-3, 5e-9, -1e-10};
  auto samples = synth_samples(truth, 0.03, 13, 30);
  auto fit1 = fit_regression(samples);
  std::reverse(samples.begin(), samples.end());
  auto fit2 = fit_regression(samples);
  CHECK(rel_diff(fit1.c1, fit2.c1) <= 1e-9);
  CHECK(rel_diff(fit1.c2, fit2.c2) <= 1e-9);
  CHECK(rel_diff(fit1.c3, fit2.c3) <= 1e-9);
}

TEST_CASE("rank_configs: order, serial entry, 1D extremes on 64 ranks") {
  auto stats = products_stats();
  MachineParams m;  // Perlmutter-like: 4 ranks/node, 25 GB/s NIC
  m.bytes_per_scalar = 4;
  auto coeffs = default_coefficients();

  auto single = rank_configs(1, stats, m, coeffs);
  REQUIRE(single.size() == 1);
  CHECK(single[0].comm_seconds == 0.0);

  auto ranked = rank_configs(64, stats, m, coeffs);
  CHECK(ranked.size() == enumerate_configs(64).size());
  for (std::size_t i = 1; i < ranked.size(); ++i)
    CHECK(ranked[i - 1].total_seconds <= ranked[i].total_seconds);

  // the winner beats every 1D extreme, and is genuinely 3D-ish
  auto total_of = [&](int gx, int gy, int gz) {
    for (const auto& p : ranked)
      if (p.shape.gx == gx && p.shape.gy == gy && p.shape.gz == gz)
        return p.total_seconds;
    FAIL("config not found");
    return 0.0;
  };
  const double best = ranked.front().total_seconds;
  CHECK(best < total_of(64, 1, 1));
  CHECK(best < total_of(1, 64, 1));
  CHECK(best < total_of(1, 1, 64));
  CHECK(ranked.front().shape.gx * ranked.front().shape.gy > 1);
}

TEST_CASE("rank ordering is invariant to uniform bandwidth scaling") {
  DatasetStats stats{100000, 2000000, {64, 32, 16}};
  MachineParams m;
  PerfCoefficients zero_spmm{0, 0, 0, 0, 0};
  auto a = rank_configs(16, stats, m, zero_spmm);
  MachineParams scaled = m;
  scaled.beta_intra *= 7.5;
  scaled.beta_inter *= 7.5;
  auto b = rank_configs(16, stats, scaled, zero_spmm);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].shape.gx == b[i].shape.gx);
    CHECK(a[i].shape.gy == b[i].shape.gy);
    CHECK(a[i].shape.gz == b[i].shape.gz);
  }
}

TEST_CASE("machine and coefficient files round trip") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "plexuskit_perf_files";
  fs::create_directories(dir);
  auto mpath = (dir / "machine.json").string();
  std::ofstream(mpath) << R"({"g_node": 8, "beta_intra": 3.0e11,
                             "beta_inter": 2.0e10, "bytes_per_scalar": 8})";
  auto m = machine_from_json_file(mpath);
  CHECK(m.g_node == 8);
  CHECK(m.beta_intra == 3.0e11);
  CHECK(m.bytes_per_scalar == 8);

  auto cpath = (dir / "coeffs.json").string();
  PerfCoefficients c{1e-3, 2e-9, -3e-10, 0.9, 0.01};
  coefficients_to_json_file(c, cpath);
  auto c2 = coefficients_from_json_file(cpath);
  CHECK(c2.c1 == c.c1);
  CHECK(c2.c2 == c.c2);
  CHECK(c2.c3 == c.c3);

  CHECK_THROWS_AS(machine_from_json_file((dir / "nope.json").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("sample CSV ingestion: feature rows and raw rows") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "plexuskit_perf_csv";
  fs::create_directories(dir);
  auto fpath = (dir / "feat.csv").string();
  std::ofstream(fpath) << "f1,f2,f3,seconds\n1.0,2.0,3.0,0.5\n4,5,6,0.25\n";
  auto feat = samples_from_csv_file(fpath);
  REQUIRE(feat.size() == 2);
  CHECK(feat[0].features[1] == 2.0);
  CHECK(feat[1].seconds == 0.25);

  auto rpath = (dir / "raw.csv").string();
  std::ofstream(rpath)
      << "n,nnz,dims,gx,gy,gz,seconds\n2449029,126167053,100-47,64,1,1,0.125\n";
  auto raw = samples_from_csv_file(rpath);
  REQUIRE(raw.size() == 1);
  DatasetStats one_layer{2449029, 126167053, {100, 47}};
  auto expect = comp_features(one_layer, {64, 1, 1});
  CHECK(raw[0].features[0] == doctest::Approx(expect.f[0]).epsilon(1e-12));
  CHECK(raw[0].features[1] == doctest::Approx(expect.f[1]).epsilon(1e-12));
  CHECK(raw[0].seconds == 0.125);

  std::ofstream(rpath) << "bogus,header\n1,2\n";
  CHECK_THROWS_AS(samples_from_csv_file(rpath), IoError);
  fs::remove_all(dir);
}

TEST_SUITE_END();
