#include "plexuskit/perf_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "plexuskit/rng.hpp"

namespace plexuskit {

namespace {

void check_stats(const DatasetStats& stats) {
  check(stats.n >= 1, "perf model: node count must be positive");
  check(stats.dims.size() >= 2, "perf model: need at least two layer dims");
  for (auto d : stats.dims)
    check(d >= 1, "perf model: zero layer dimension");
}

int extent_of(const GridShape& s, Axis a) {
  switch (a) {
    case Axis::X: return s.gx;
    case Axis::Y: return s.gy;
    default: return s.gz;
  }
}

}  // namespace

CompFeatures comp_features(const DatasetStats& stats, const GridShape& shape) {
  check_stats(stats);
  check(shape.gx >= 1 && shape.gy >= 1 && shape.gz >= 1,
        "perf model: grid dims must be >= 1");
  const int num_layers = static_cast<int>(stats.dims.size()) - 1;
  auto layouts = plan_layouts(num_layers);
  CompFeatures out;
  for (int l = 0; l < num_layers; ++l) {
    const double d = static_cast<double>(stats.dims[l]);
    const double flops_cost = static_cast<double>(stats.nnz) * d;
    const double root = std::sqrt(flops_cost);
    const double n = static_cast<double>(stats.n);
    const double g_in = extent_of(shape, layouts[l].inner);
    const double g_col = extent_of(shape, layouts[l].col_shard);
    const double g_row = extent_of(shape, layouts[l].row_shard);
    const double fwd_penalty = (n / g_in) * (g_col / d);
    const double bwd_penalty = (n / g_row) * (g_col / d);
    out.f[0] += root;
    out.f[1] += root * fwd_penalty;
    out.f[2] += root * bwd_penalty;
  }
  return out;
}

SpmmPrediction predict_spmm_time(const CompFeatures& features,
                                 const PerfCoefficients& coeffs) {
  double t = coeffs.c1 * features.f[0] + coeffs.c2 * features.f[1] +
             coeffs.c3 * features.f[2];
  if (t < 0) return {0.0, true};
  return {t, false};
}

double effective_bandwidth(Axis axis, const GridShape& shape,
                           const MachineParams& machine) {
  check(machine.beta_intra > 0 && machine.beta_inter > 0 && machine.g_node >= 1,
        "perf model: invalid machine parameters");
  const int g = extent_of(shape, axis);
  if (g == 1) return machine.beta_intra;  // singleton groups never send
  // ranks are packed into nodes prioritizing Y, then X, then Z
  double packed_before = 1;
  if (axis == Axis::X) packed_before = shape.gy;
  if (axis == Axis::Z) packed_before = static_cast<double>(shape.gx) * shape.gy;
  if (packed_before * g <= machine.g_node) return machine.beta_intra;
  return machine.beta_inter / std::min<double>(machine.g_node, packed_before);
}

double ring_collective_seconds(CollOp op, double m_bytes, int g, double beta) {
  check(g >= 1 && beta > 0, "ring_collective_seconds: invalid arguments");
  const double factor = op == CollOp::AllReduce ? 2.0 : 1.0;
  const double gd = g;
  return factor / beta * ((gd - 1) / gd) * m_bytes;
}

CommPrediction predict_comm_time(const GridShape& shape,
                                 const DatasetStats& stats,
                                 const MachineParams& machine) {
  check_stats(stats);
  GridConfig grid(shape.gx, shape.gy, shape.gz);
  auto volumes = training_collective_volumes(grid, stats.n, stats.dims);
  CommPrediction out;
  for (const auto& v : volumes) {
    const int g = grid.extent(v.axis);
    const double m = static_cast<double>(v.elems) * machine.bytes_per_scalar;
    const double beta = effective_bandwidth(v.axis, shape, machine);
    const double t = ring_collective_seconds(v.op, m, g, beta);
    out.items.push_back({v.layer, v.forward, v.op, v.axis, t});
    out.total += t;
  }
  return out;
}

PerfCoefficients fit_regression(const std::vector<RegressionSample>& samples) {
  check(samples.size() >= 3,
        "fit_regression: need at least 3 samples, got " +
            std::to_string(samples.size()));
  // Normal equations, column-equilibrated: the three features differ by many
  // orders of magnitude (the fitted coefficients compensate), so the system
  // is scaled to unit diagonal before full-pivot elimination.
  double xtx[3][3] = {};
  double xty[3] = {};
  for (const auto& s : samples)
    for (int i = 0; i < 3; ++i) {
      xty[i] += s.features[i] * s.seconds;
      for (int j = 0; j < 3; ++j) xtx[i][j] += s.features[i] * s.features[j];
    }
  double col_scale[3];
  for (int j = 0; j < 3; ++j) {
    col_scale[j] = std::sqrt(xtx[j][j]);
    check(col_scale[j] > 0,
          "fit_regression: feature " + std::to_string(j + 1) +
              " is identically zero; supply more diverse configurations");
  }

  int col_of[3] = {0, 1, 2};
  double a[3][4];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j)
      a[i][j] = xtx[i][j] / (col_scale[i] * col_scale[j]);
    a[i][3] = xty[i] / col_scale[i];
  }
  for (int step = 0; step < 3; ++step) {
    int pr = step, pc = step;
    double best = 0;
    for (int i = step; i < 3; ++i)
      for (int j = step; j < 3; ++j)
        if (std::abs(a[i][j]) > best) best = std::abs(a[i][j]), pr = i, pc = j;
    check(best > 1e-12,
          "fit_regression: features are rank deficient; supply more diverse "
          "configurations");
    for (int j = 0; j <= 3; ++j) std::swap(a[step][j], a[pr][j]);
    std::swap(col_of[step], col_of[pc]);
    for (int i = 0; i < 3; ++i) std::swap(a[i][step], a[i][pc]);
    for (int i = step + 1; i < 3; ++i) {
      double f = a[i][step] / a[step][step];
      for (int j = step; j <= 3; ++j) a[i][j] -= f * a[step][j];
    }
  }
  double sol[3];
  for (int i = 2; i >= 0; --i) {
    double rhs = a[i][3];
    for (int j = i + 1; j < 3; ++j) rhs -= a[i][j] * sol[j];
    sol[i] = rhs / a[i][i];
  }
  PerfCoefficients out;
  double c[3];
  for (int j = 0; j < 3; ++j) c[col_of[j]] = sol[j];
  out.c1 = c[0] / col_scale[0];
  out.c2 = c[1] / col_scale[1];
  out.c3 = c[2] / col_scale[2];

  double mean = 0;
  for (const auto& s : samples) mean += s.seconds;
  mean /= static_cast<double>(samples.size());
  double ss_res = 0, ss_tot = 0;
  for (const auto& s : samples) {
    double pred = out.c1 * s.features[0] + out.c2 * s.features[1] +
                  out.c3 * s.features[2];
    ss_res += (s.seconds - pred) * (s.seconds - pred);
    ss_tot += (s.seconds - mean) * (s.seconds - mean);
  }
  out.train_rmse = std::sqrt(ss_res / static_cast<double>(samples.size()));
  out.train_r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return out;
}

SplitReport fit_with_split(const std::vector<RegressionSample>& samples,
                           double train_fraction, u64 seed) {
  check(train_fraction > 0 && train_fraction < 1,
        "fit_with_split: fraction must be in (0,1)");
  Philox rng(seed, 17);
  auto order = rng.permutation(samples.size());
  const std::size_t n_train = std::max<std::size_t>(
      3, static_cast<std::size_t>(train_fraction * samples.size()));
  check(n_train < samples.size(), "fit_with_split: test split is empty");
  std::vector<RegressionSample> train, test;
  for (std::size_t i = 0; i < samples.size(); ++i)
    (i < n_train ? train : test).push_back(samples[order[i]]);
  SplitReport rep;
  rep.coeffs = fit_regression(train);
  double mean = 0;
  for (const auto& s : test) mean += s.seconds;
  mean /= static_cast<double>(test.size());
  double ss_res = 0, ss_tot = 0;
  for (const auto& s : test) {
    double pred = rep.coeffs.c1 * s.features[0] + rep.coeffs.c2 * s.features[1] +
                  rep.coeffs.c3 * s.features[2];
    ss_res += (s.seconds - pred) * (s.seconds - pred);
    ss_tot += (s.seconds - mean) * (s.seconds - mean);
  }
  rep.test_rmse = std::sqrt(ss_res / static_cast<double>(test.size()));
  rep.test_r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return rep;
}

std::vector<ConfigPrediction> rank_configs(int g, const DatasetStats& stats,
                                           const MachineParams& machine,
                                           const PerfCoefficients& coeffs) {
  std::vector<ConfigPrediction> out;
  for (const auto& shape : enumerate_configs(g)) {
    ConfigPrediction p;
    p.shape = shape;
    auto spmm = predict_spmm_time(comp_features(stats, shape), coeffs);
    p.spmm_seconds = spmm.seconds;
    p.clamped = spmm.clamped;
    p.comm_seconds = predict_comm_time(shape, stats, machine).total;
    p.total_seconds = p.spmm_seconds + p.comm_seconds;
    out.push_back(p);
  }
  std::sort(out.begin(), out.end(),
            [](const ConfigPrediction& a, const ConfigPrediction& b) {
              if (a.total_seconds != b.total_seconds)
                return a.total_seconds < b.total_seconds;
              return std::tuple{a.shape.gz, a.shape.gx, a.shape.gy} <
                     std::tuple{b.shape.gz, b.shape.gx, b.shape.gy};
            });
  return out;
}

MachineParams machine_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorCode::MissingFile, "cannot open machine file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoErrorCode::BadFormat,
                  "machine file " + path + ": " + e.what());
  }
  MachineParams m;
  m.g_node = j.value("g_node", m.g_node);
  m.beta_intra = j.value("beta_intra", m.beta_intra);
  m.beta_inter = j.value("beta_inter", m.beta_inter);
  m.bytes_per_scalar = j.value("bytes_per_scalar", m.bytes_per_scalar);
  check(m.g_node >= 1 && m.beta_intra > 0 && m.beta_inter > 0 &&
            m.bytes_per_scalar > 0,
        "machine file " + path + ": invalid values");
  return m;
}

PerfCoefficients coefficients_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw IoError(IoErrorCode::MissingFile, "cannot open coefficients file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoErrorCode::BadFormat,
                  "coefficients file " + path + ": " + e.what());
  }
  PerfCoefficients c;
  c.c1 = j.at("c1").get<double>();
  c.c2 = j.at("c2").get<double>();
  c.c3 = j.at("c3").get<double>();
  c.train_r2 = j.value("train_r2", 0.0);
  c.train_rmse = j.value("train_rmse", 0.0);
  return c;
}

void coefficients_to_json_file(const PerfCoefficients& coeffs,
                               const std::string& path) {
  nlohmann::json j = {{"c1", coeffs.c1},
                      {"c2", coeffs.c2},
                      {"c3", coeffs.c3},
                      {"train_r2", coeffs.train_r2},
                      {"train_rmse", coeffs.train_rmse}};
  std::ofstream out(path);
  if (!out)
    throw IoError(IoErrorCode::WriteFailed, "cannot write coefficients file " + path);
  out << j.dump(2) << "\n";
}

std::vector<RegressionSample> samples_from_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorCode::MissingFile, "cannot open sample log " + path);
  std::string header;
  std::getline(in, header);
  auto split = [](const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    return fields;
  };
  auto head = split(header);
  bool raw;
  if (head.size() == 4 && head[0] == "f1") {
    raw = false;
  } else if (head.size() == 7 && head[0] == "n") {
    raw = true;
  } else {
    throw IoError(IoErrorCode::BadFormat,
                  "sample log " + path +
                      ": expected header f1,f2,f3,seconds or "
                      "n,nnz,dims,gx,gy,gz,seconds");
  }
  std::vector<RegressionSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line);
    RegressionSample s;
    try {
      if (!raw) {
        check(f.size() == 4, "bad field count");
        s.features = {std::stod(f[0]), std::stod(f[1]), std::stod(f[2])};
        s.seconds = std::stod(f[3]);
      } else {
        check(f.size() == 7, "bad field count");
        DatasetStats stats;
        stats.n = std::stoull(f[0]);
        stats.nnz = std::stoull(f[1]);
        std::stringstream ds(f[2]);
        std::string d;
        while (std::getline(ds, d, '-')) stats.dims.push_back(std::stoull(d));
        GridShape shape{std::stoi(f[3]), std::stoi(f[4]), std::stoi(f[5])};
        s.features = comp_features(stats, shape).f;
        s.seconds = std::stod(f[6]);
      }
    } catch (const std::exception& e) {
      throw IoError(IoErrorCode::BadFormat,
                    "sample log " + path + ": bad row '" + line + "': " + e.what());
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace plexuskit
