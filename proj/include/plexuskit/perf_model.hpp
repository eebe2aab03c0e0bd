#pragma once

// Analytic epoch-time prediction for 3D grid configurations: an SpMM cost
// model with matrix-shape penalties, a ring-collective communication model
// with effective per-axis bandwidths, least-squares coefficient fitting and
// configuration ranking. Buffer sizes come from the same layout algebra the
// engine executes, so model and engine traffic agree by construction.

#include <array>
#include <string>
#include <vector>

#include "plexuskit/grid.hpp"
#include "plexuskit/layout.hpp"

namespace plexuskit {

struct DatasetStats {
  std::size_t n = 0;           // nodes
  u64 nnz = 0;                 // adjacency nonzeros (after normalization)
  std::vector<std::size_t> dims;  // [D_in, hidden..., classes], length L+1
};

struct MachineParams {
  int g_node = 4;
  double beta_intra = 200e9;  // bytes/s within a node (NVLink-class default)
  double beta_inter = 25e9;   // bytes/s per-NIC injection
  int bytes_per_scalar = 4;
};

struct PerfCoefficients {
  double c1 = 0, c2 = 0, c3 = 0;
  double train_r2 = 0, train_rmse = 0;
};

// Built-in fallback coefficients from a reference fit; used when the
// operator supplies none.
inline PerfCoefficients default_coefficients() {
  return {7.8e-4, 7.8e-10, -2.6e-10, 0, 0};
}

struct CompFeatures {
  // summed over layers: sqrt(flops_cost), sqrt(fc)*fwd_penalty,
  // sqrt(fc)*bwd_penalty
  std::array<double, 3> f{0, 0, 0};
};

CompFeatures comp_features(const DatasetStats& stats, const GridShape& shape);

struct SpmmPrediction {
  double seconds = 0;
  bool clamped = false;  // negative prediction clamped to zero
};

SpmmPrediction predict_spmm_time(const CompFeatures& features,
                                 const PerfCoefficients& coeffs);

double effective_bandwidth(Axis axis, const GridShape& shape,
                           const MachineParams& machine);

// Ring-algorithm time for one collective on an M-byte buffer across g ranks:
// all-reduce costs 2/beta * (g-1)/g * M, gather/scatter half of that. The
// latency term is omitted (large, bandwidth-bound messages).
double ring_collective_seconds(CollOp op, double m_bytes, int g, double beta);

struct CommPrediction {
  struct Item {
    int layer;
    bool forward;
    CollOp op;
    Axis axis;
    double seconds;
  };
  std::vector<Item> items;
  double total = 0;
};

CommPrediction predict_comm_time(const GridShape& shape,
                                 const DatasetStats& stats,
                                 const MachineParams& machine);

struct RegressionSample {
  std::array<double, 3> features{0, 0, 0};
  double seconds = 0;
};

// Ordinary least squares over the three cost-model features; throws on fewer
// than 3 samples or rank-deficient features.
PerfCoefficients fit_regression(const std::vector<RegressionSample>& samples);

struct SplitReport {
  PerfCoefficients coeffs;  // fitted on the train split
  double test_r2 = 0, test_rmse = 0;
};

// Random train/test split evaluation (e.g. 0.7 for a 70-30 split).
SplitReport fit_with_split(const std::vector<RegressionSample>& samples,
                           double train_fraction, u64 seed);

struct ConfigPrediction {
  GridShape shape;
  double spmm_seconds = 0;
  double comm_seconds = 0;
  double total_seconds = 0;
  bool clamped = false;
};

// All ordered factorizations of g, predicted and sorted ascending by total;
// ties broken lexicographically by (gz, gx, gy).
std::vector<ConfigPrediction> rank_configs(int g, const DatasetStats& stats,
                                           const MachineParams& machine,
                                           const PerfCoefficients& coeffs);

// machine description file: JSON object with keys g_node, beta_intra,
// beta_inter, bytes_per_scalar
MachineParams machine_from_json_file(const std::string& path);
PerfCoefficients coefficients_from_json_file(const std::string& path);
void coefficients_to_json_file(const PerfCoefficients& coeffs,
                               const std::string& path);

// Sample log ingestion. Accepts either feature rows
//   f1,f2,f3,seconds
// or raw rows that name the dataset shape and configuration
//   n,nnz,dims,gx,gy,gz,seconds      (dims like "100-128-128-47")
std::vector<RegressionSample> samples_from_csv_file(const std::string& path);

}  // namespace plexuskit
