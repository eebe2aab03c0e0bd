// plexuskit command line: preprocess datasets into 2D shards, train on a
// virtual 3D grid, rank grid configurations with the performance model, and
// validate distributed runs against the serial reference.
//
// Exit codes: 0 ok, 1 validation/training failure, 2 input error,
// 3 output error, 4 resource exhaustion.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "plexuskit/perf_model.hpp"
#include "plexuskit/trainer.hpp"

namespace fs = std::filesystem;
using namespace plexuskit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInput = 2;
constexpr int kExitOutput = 3;
constexpr int kExitResource = 4;

struct CliError {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& msg) {
  throw CliError{code, msg};
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  return out;
}

// "kind:key=value,key=value" synthetic dataset spec
struct SynthSpec {
  std::string kind;
  std::map<std::string, double> params;
};

SynthSpec parse_synth(const std::string& spec) {
  SynthSpec out;
  auto colon = spec.find(':');
  out.kind = spec.substr(0, colon);
  if (colon != std::string::npos)
    for (const auto& kv : split(spec.substr(colon + 1), ',')) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        fail(kExitInput, "bad synth parameter '" + kv + "' (expected key=value)");
      try {
        out.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
      } catch (const std::exception&) {
        fail(kExitInput, "bad synth parameter value in '" + kv + "'");
      }
    }
  return out;
}

template <typename T>
GraphDataset<T> make_synth_dataset(const SynthSpec& spec, std::size_t feat_dim,
                                   u32 classes, u64 seed, double train_fraction) {
  auto get = [&](const std::string& key, double dflt) {
    auto it = spec.params.find(key);
    return it == spec.params.end() ? dflt : it->second;
  };
  if (spec.kind == "sbm")
    return synth_sbm<T>({static_cast<std::size_t>(get("n", 1024)),
                         static_cast<int>(get("k", 8)), get("p_in", 0.1),
                         get("p_out", 0.01)},
                        feat_dim, classes, seed, train_fraction);
  if (spec.kind == "erdos")
    return synth_erdos<T>(
        {static_cast<std::size_t>(get("n", 1024)), get("p", 0.01)}, feat_dim,
        classes, seed, train_fraction);
  if (spec.kind == "rmat")
    return synth_rmat<T>({static_cast<int>(get("scale", 10)),
                          static_cast<u64>(get("edges", 0)), get("a", 0.57),
                          get("b", 0.19), get("c", 0.19)},
                         feat_dim, classes, seed, train_fraction);
  fail(kExitInput, "unknown synth kind '" + spec.kind +
                       "' (expected sbm, erdos or rmat)");
}

template <typename T>
GraphDataset<T> load_dataset_files(const std::string& edges_path,
                                   const std::string& features_path,
                                   const std::string& labels_path,
                                   const std::string& mask_path,
                                   std::size_t nodes_override,
                                   std::size_t feat_dim, u32 classes, u64 seed,
                                   bool directed) {
  GraphDataset<T> ds;
  ds.undirected = !directed;

  // binary CSR dump or whitespace edge list
  std::ifstream probe(edges_path, std::ios::binary);
  if (!probe) fail(kExitInput, "cannot open edge input " + edges_path);
  char magic[4] = {0};
  probe.read(magic, 4);
  probe.close();
  if (std::string(magic, 4) == "PLXC") {
    auto a = shard_io::read_csr_file<T>(edges_path);
    check(a.rows() == a.cols(), "CSR edge input must be square");
    ds.num_nodes = a.rows();
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (u64 k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k)
        ds.edges.emplace_back(static_cast<u32>(i), a.col_idx()[k]);
  } else {
    auto parsed = shard_io::parse_edge_list(edges_path);
    ds.num_nodes = std::max(nodes_override, parsed.max_node + 1);
    ds.edges = std::move(parsed.edges);
  }
  if (nodes_override > 0 && nodes_override < ds.num_nodes)
    fail(kExitInput, "--nodes is smaller than the largest edge endpoint");
  if (nodes_override > 0) ds.num_nodes = nodes_override;

  if (!features_path.empty()) {
    ds.features = shard_io::read_dense_file<T>(features_path);
    check(ds.features.rows() == ds.num_nodes,
          "feature file rows do not match the node count");
  } else {
    Philox rng(seed, 3);
    ds.features = DenseMatrix<T>::zeros(ds.num_nodes, feat_dim);
    for (std::size_t i = 0; i < ds.features.size(); ++i)
      ds.features.data()[i] = static_cast<T>(rng.next_double());
  }

  if (!labels_path.empty()) {
    std::ifstream in(labels_path);
    if (!in) fail(kExitInput, "cannot open labels file " + labels_path);
    u64 v;
    while (in >> v) ds.labels.push_back(static_cast<u32>(v));
    check(ds.labels.size() == ds.num_nodes,
          "labels file length does not match the node count");
    u32 max_label = 0;
    for (u32 l : ds.labels) max_label = std::max(max_label, l);
    ds.num_classes = std::max(classes, max_label + 1);
  } else {
    ds.num_classes = classes;
    ds.labels = plexuskit::detail::degree_quantile_labels(ds.edges, ds.num_nodes,
                                                          classes);
  }

  if (!mask_path.empty()) {
    std::ifstream in(mask_path);
    if (!in) fail(kExitInput, "cannot open mask file " + mask_path);
    int v;
    while (in >> v) ds.train_mask.push_back(v ? 1 : 0);
    check(ds.train_mask.size() == ds.num_nodes,
          "mask file length does not match the node count");
  } else {
    ds.train_mask.assign(ds.num_nodes, 1);
  }
  ds.validate();
  return ds;
}

GridShape parse_grid(const std::string& s) {
  auto parts = split(s, ',');
  if (parts.size() != 3) fail(kExitInput, "--grid expects X,Y,Z or 'auto'");
  try {
    return {std::stoi(parts[0]), std::stoi(parts[1]), std::stoi(parts[2])};
  } catch (const std::exception&) {
    fail(kExitInput, "--grid expects integers");
  }
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    fail(kExitOutput, "cannot create output directory " + dir);
  // probe writability
  auto probe = fs::path(dir) / ".plexuskit_write_probe";
  std::ofstream f(probe);
  if (!f) fail(kExitOutput, "output directory " + dir + " is not writable");
  f.close();
  fs::remove(probe, ec);
}

struct MetricsCsv {
  std::ofstream out;
  explicit MetricsCsv(const std::string& path) : out(path) {
    if (!out) fail(kExitOutput, "cannot write " + path);
    out << "epoch,rank,loss,accuracy,load_s,forward_spmm_s,forward_gemm_s,"
           "backward_s,optimizer_s,collectives_s,spmm_flops,gemm_flops,"
           "allreduce_bytes,allgather_bytes,reducescatter_bytes\n";
  }
  void row(const std::string& rank, const EpochMetrics& m) {
    out << m.epoch << ',' << rank << ',' << m.loss << ',' << m.accuracy << ','
        << m.load_s << ',' << m.forward_spmm_s << ',' << m.forward_gemm_s << ','
        << m.backward_s << ',' << m.optimizer_s << ',' << m.collectives_s << ','
        << m.spmm_flops << ',' << m.gemm_flops << ',' << m.allreduce_bytes << ','
        << m.allgather_bytes << ',' << m.reducescatter_bytes << '\n';
  }
};

EpochMetrics average_window(const std::vector<EpochMetrics>& all) {
  // mirror the reporting convention: skip the first two epochs when enough
  // epochs exist (initial fluctuations)
  std::size_t first = all.size() > 2 ? 2 : 0;
  EpochMetrics avg;
  const double n = static_cast<double>(all.size() - first);
  for (std::size_t e = first; e < all.size(); ++e) {
    const auto& m = all[e];
    avg.loss += m.loss / n;
    avg.accuracy += m.accuracy / n;
    avg.load_s += m.load_s / n;
    avg.forward_spmm_s += m.forward_spmm_s / n;
    avg.forward_gemm_s += m.forward_gemm_s / n;
    avg.backward_s += m.backward_s / n;
    avg.optimizer_s += m.optimizer_s / n;
    avg.collectives_s += m.collectives_s / n;
    avg.allreduce_bytes += m.allreduce_bytes / n;
    avg.allgather_bytes += m.allgather_bytes / n;
    avg.reducescatter_bytes += m.reducescatter_bytes / n;
  }
  avg.epoch = static_cast<int>(first);
  return avg;
}

// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string edges, features, labels, mask, synth, out_dir, name = "dataset";
  std::string precision = "f64";
  std::size_t nodes = 0, feat_dim = 128;
  u32 classes = 32;
  int p = 8, q = 8;
  u64 seed = 0;
  double train_fraction = 1.0;
  bool directed = false;
};

template <typename T>
int run_preprocess(const PreprocessArgs& a) {
  GraphDataset<T> ds =
      a.synth.empty()
          ? load_dataset_files<T>(a.edges, a.features, a.labels, a.mask,
                                  a.nodes, a.feat_dim, a.classes, a.seed,
                                  a.directed)
          : make_synth_dataset<T>(parse_synth(a.synth), a.feat_dim, a.classes,
                                  a.seed, a.train_fraction);
  ensure_out_dir(a.out_dir);

  auto normalized = normalize_adjacency(ds);
  auto pre = preprocess(ds, a.seed);
  const double bal_orig = balance_metric(normalized, a.p, a.q);
  auto pair = generate_permutation_pair(ds.num_nodes, a.seed);
  const double bal_single =
      balance_metric(permute_csr(normalized, pair.row_perm, pair.row_perm), a.p,
                     a.q);
  const double bal_double = balance_metric(pre.a_even, a.p, a.q);

  auto manifest = shard_io::write_shards(pre, a.p, a.q, a.out_dir, a.name);
  std::cout << "dataset " << a.name << ": " << ds.num_nodes << " nodes, "
            << pre.a_even.nnz() << " nonzeros, " << ds.features.cols()
            << " features, " << ds.num_classes << " classes\n";
  std::cout << "balance (max/mean over " << a.p << "x" << a.q
            << " blocks): original " << bal_orig << ", single permutation "
            << bal_single << ", double permutation " << bal_double << "\n";
  std::cout << "wrote " << manifest.files.size() << " shard files + manifest to "
            << a.out_dir << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string manifest_path, grid = "1,1,1", out_dir = "train_out";
  std::string machine_file, coeffs_file, precision;
  std::vector<std::size_t> hidden = {128, 128};
  int epochs = 10;
  int ranks = 0;  // for --grid auto
  u64 seed = 0;
  double lr = 1e-2;
  int block_count = 0;
  bool deterministic = true;
  bool lockstep = false;
};

template <typename T>
int run_train(const TrainArgs& a, const shard_io::ShardManifest& manifest) {
  ensure_out_dir(a.out_dir);
  GridShape shape{1, 1, 1};
  if (a.grid == "auto") {
    if (a.machine_file.empty())
      fail(kExitInput, "--grid auto requires --machine");
    if (a.ranks < 1) fail(kExitInput, "--grid auto requires --ranks");
    MachineParams machine = machine_from_json_file(a.machine_file);
    machine.bytes_per_scalar = sizeof(T);
    PerfCoefficients coeffs;
    if (!a.coeffs_file.empty()) {
      coeffs = coefficients_from_json_file(a.coeffs_file);
    } else {
      coeffs = default_coefficients();
      std::cerr << "warning: no --coeffs given, using built-in default "
                   "coefficients\n";
    }
    DatasetStats stats{manifest.n, manifest.nnz_even,
                       model_dims(manifest.feat_dim, a.hidden, manifest.classes)};
    auto ranked = rank_configs(a.ranks, stats, machine, coeffs);
    shape = ranked.front().shape;
    std::cout << "auto-selected grid " << shape.str() << " (predicted "
              << ranked.front().total_seconds << " s/epoch)\n";
  } else {
    shape = parse_grid(a.grid);
  }

  TrainOptions opts;
  opts.epochs = a.epochs;
  opts.adam.lr = a.lr;
  opts.seed = a.seed;
  opts.block_count = a.block_count;
  opts.hidden_dims = a.hidden;
  ClusterOptions copts;
  copts.lockstep = a.lockstep;
  copts.deterministic = a.deterministic;

  GridConfig grid(shape.gx, shape.gy, shape.gz);
  auto result = train_distributed(file_handle<T>(manifest), grid, opts, copts);

  MetricsCsv csv((fs::path(a.out_dir) / "metrics.csv").string());
  for (int e = 0; e < a.epochs; ++e) {
    for (int r = 0; r < grid.size(); ++r)
      csv.row(std::to_string(r), result.per_rank[r][e]);
    csv.row("global", result.global[e]);
  }

  {
    std::ofstream sum((fs::path(a.out_dir) / "summary.csv").string());
    if (!sum) fail(kExitOutput, "cannot write summary.csv");
    sum << "grid,epochs,averaged_from_epoch,loss,accuracy,forward_spmm_s,"
           "forward_gemm_s,backward_s,optimizer_s,collectives_s\n";
    if (!result.global.empty()) {
      auto avg = average_window(result.global);
      sum << shape.str() << ',' << a.epochs << ',' << avg.epoch << ','
          << avg.loss << ',' << avg.accuracy << ',' << avg.forward_spmm_s << ','
          << avg.forward_gemm_s << ',' << avg.backward_s << ','
          << avg.optimizer_s << ',' << avg.collectives_s << '\n';
    }
  }

  {
    std::ofstream comm((fs::path(a.out_dir) / "comm_stats.csv").string());
    if (!comm) fail(kExitOutput, "cannot write comm_stats.csv");
    comm << "rank,axis,collective,calls,ring_bytes\n";
    for (int r = 0; r < grid.size(); ++r)
      for (int ax = 0; ax < 3; ++ax)
        for (CollOp op :
             {CollOp::AllGather, CollOp::AllReduce, CollOp::ReduceScatter}) {
          Axis axis = static_cast<Axis>(ax);
          const auto& ctr = result.stats[r].at(axis, op);
          comm << r << ',' << axis_name(axis) << ',' << coll_name(op) << ','
               << ctr.calls << ',' << result.stats[r].bytes(axis, op, grid)
               << '\n';
        }
  }

  shard_io::write_model_file(result.weights, result.features,
                             (fs::path(a.out_dir) / "model.plxm").string());

  if (!result.global.empty())
    std::cout << "trained " << a.epochs << " epochs on grid " << shape.str()
              << ": loss " << result.global.front().loss << " -> "
              << result.global.back().loss << ", accuracy "
              << result.global.back().accuracy << "\n";
  std::cout << "wrote metrics.csv, summary.csv, comm_stats.csv, model.plxm to "
            << a.out_dir << "\n";
  return kExitOk;
}

struct RankArgs {
  std::string manifest_path, stats_spec, machine_file, coeffs_file;
  std::string fit_samples, coeffs_out, csv_out;
  std::vector<std::size_t> hidden = {128, 128};
  int g = 8;
};

int run_rank_configs(const RankArgs& a) {
  DatasetStats stats;
  if (!a.manifest_path.empty()) {
    auto manifest = shard_io::load_manifest(a.manifest_path);
    stats = {manifest.n, manifest.nnz_even,
             model_dims(manifest.feat_dim, a.hidden, manifest.classes)};
  } else if (!a.stats_spec.empty()) {
    // n=..,nnz=..,dims=D0-...-C
    std::map<std::string, std::string> kv;
    for (const auto& part : split(a.stats_spec, ',')) {
      auto eq = part.find('=');
      if (eq == std::string::npos)
        fail(kExitInput, "bad --stats entry '" + part + "'");
      kv[part.substr(0, eq)] = part.substr(eq + 1);
    }
    try {
      stats.n = std::stoull(kv.at("n"));
      stats.nnz = std::stoull(kv.at("nnz"));
      for (const auto& d : split(kv.at("dims"), '-'))
        stats.dims.push_back(std::stoull(d));
    } catch (const std::exception&) {
      fail(kExitInput, "--stats expects n=..,nnz=..,dims=D0-H1-...-C");
    }
  } else {
    fail(kExitInput, "rank-configs needs --manifest or --stats");
  }

  MachineParams machine;
  if (!a.machine_file.empty()) machine = machine_from_json_file(a.machine_file);

  PerfCoefficients coeffs;
  if (!a.fit_samples.empty()) {
    auto samples = samples_from_csv_file(a.fit_samples);
    coeffs = fit_regression(samples);
    std::cout << "fitted coefficients: c1=" << coeffs.c1 << " c2=" << coeffs.c2
              << " c3=" << coeffs.c3 << " (train R2 " << coeffs.train_r2
              << ", RMSE " << coeffs.train_rmse << ")\n";
    if (!a.coeffs_out.empty()) coefficients_to_json_file(coeffs, a.coeffs_out);
  } else if (!a.coeffs_file.empty()) {
    coeffs = coefficients_from_json_file(a.coeffs_file);
  } else {
    coeffs = default_coefficients();
    std::cerr << "warning: no coefficients supplied, using built-in defaults\n";
  }

  auto ranked = rank_configs(a.g, stats, machine, coeffs);
  std::cout << "gx,gy,gz,spmm_s,comm_s,total_s\n";
  for (const auto& p : ranked)
    std::cout << p.shape.gx << ',' << p.shape.gy << ',' << p.shape.gz << ','
              << p.spmm_seconds << ',' << p.comm_seconds << ','
              << p.total_seconds << (p.clamped ? " (spmm clamped to 0)" : "")
              << "\n";
  if (!a.csv_out.empty()) {
    std::ofstream out(a.csv_out);
    if (!out) fail(kExitOutput, "cannot write " + a.csv_out);
    out << "gx,gy,gz,spmm_s,comm_s,total_s,clamped\n";
    for (const auto& p : ranked)
      out << p.shape.gx << ',' << p.shape.gy << ',' << p.shape.gz << ','
          << p.spmm_seconds << ',' << p.comm_seconds << ',' << p.total_seconds
          << ',' << (p.clamped ? 1 : 0) << '\n';
  }
  return kExitOk;
}

struct ValidateArgs {
  std::string manifest_path, synth;
  std::vector<int> g_list = {8};
  std::vector<std::size_t> hidden = {16};
  std::size_t feat_dim = 16;
  u32 classes = 32;
  int epochs = 10;
  u64 seed = 0;
  double lr = 1e-2;
  double tolerance = 1e-9;
  bool inject_fault = false;
  bool lockstep = false;
};

int run_validate(const ValidateArgs& a) {
  PreprocessedDataset<double> pre;
  if (!a.manifest_path.empty()) {
    auto manifest = shard_io::load_manifest(a.manifest_path);
    if (manifest.precision != 8)
      fail(kExitInput, "validate needs an f64 manifest (64-bit deterministic)");
    pre = load_preprocessed<double>(manifest);
  } else if (!a.synth.empty()) {
    auto ds = make_synth_dataset<double>(parse_synth(a.synth), a.feat_dim,
                                         a.classes, a.seed, 1.0);
    pre = preprocess(ds, a.seed);
  } else {
    fail(kExitInput, "validate needs --manifest or --synth");
  }

  TrainOptions opts;
  opts.epochs = a.epochs;
  opts.adam.lr = a.lr;
  opts.seed = a.seed;
  opts.hidden_dims = a.hidden;
  if (a.inject_fault) opts.fault_epoch = 0;

  auto serial = SerialTrainer<double>(pre, opts).train();
  std::cout << "serial reference: " << a.epochs << " epochs, final loss "
            << (serial.empty() ? 0.0 : serial.back().loss) << "\n";

  ClusterOptions copts;
  copts.lockstep = a.lockstep;
  bool all_ok = true;
  for (int g : a.g_list) {
    for (const auto& shape : enumerate_configs(g)) {
      GridConfig grid(shape.gx, shape.gy, shape.gz);
      auto dist = train_distributed(memory_handle(pre), grid, opts, copts);
      double worst = 0;
      int worst_epoch = 0;
      for (int e = 0; e < a.epochs; ++e) {
        const double dev =
            std::abs(dist.global[e].loss - serial[e].loss) /
            std::max({std::abs(serial[e].loss), std::abs(dist.global[e].loss),
                      1e-300});
        if (dev > worst) worst = dev, worst_epoch = e;
      }
      const bool ok = worst <= a.tolerance;
      all_ok = all_ok && ok;
      std::cout << (ok ? "PASS" : "FAIL") << " config (" << shape.str()
                << "): max rel loss deviation " << worst << " at epoch "
                << worst_epoch << "\n";
    }
  }
  std::cout << (all_ok ? "validation passed" : "validation FAILED") << "\n";
  return all_ok ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D tensor-parallel full-graph GCN training engine"};
  app.require_subcommand(1);

  PreprocessArgs pa;
  auto* pre_cmd = app.add_subcommand(
      "preprocess", "normalize, double-permute and shard a dataset");
  pre_cmd->add_option("--edges", pa.edges,
                      "edge list ('src dst' text) or PLXC binary CSR");
  pre_cmd->add_option("--synth", pa.synth,
                      "synthetic dataset, e.g. sbm:n=4096,k=8,p_in=0.2,p_out=0.001");
  pre_cmd->add_option("--features", pa.features, "PLXD dense feature file");
  pre_cmd->add_option("--labels", pa.labels, "label file, one class id per line");
  pre_cmd->add_option("--train-mask", pa.mask, "mask file, one 0/1 per line");
  pre_cmd->add_option("--nodes", pa.nodes, "node count override");
  pre_cmd->add_option("--feat-dim", pa.feat_dim,
                      "synthesized feature width (default 128)");
  pre_cmd->add_option("--classes", pa.classes,
                      "synthesized class count (default 32)");
  pre_cmd->add_option("--train-fraction", pa.train_fraction,
                      "fraction of nodes in the training mask");
  pre_cmd->add_flag("--directed", pa.directed, "keep edge direction");
  pre_cmd->add_option("--p", pa.p, "shard grid rows (default 8)");
  pre_cmd->add_option("--q", pa.q, "shard grid cols (default 8)");
  pre_cmd->add_option("--seed", pa.seed, "permutation/synthesis seed");
  pre_cmd->add_option("--precision", pa.precision, "f32 or f64 (default f64)")
      ->check(CLI::IsMember({"f32", "f64"}));
  pre_cmd->add_option("--name", pa.name, "dataset name stored in the manifest");
  pre_cmd->add_option("--out", pa.out_dir, "output directory")->required();

  TrainArgs ta;
  auto* train_cmd =
      app.add_subcommand("train", "train on a virtual 3D grid from shards");
  train_cmd->add_option("--manifest", ta.manifest_path, "shard manifest path")
      ->required();
  train_cmd->add_option("--grid", ta.grid, "X,Y,Z or 'auto'");
  train_cmd->add_option("--ranks", ta.ranks, "total ranks for --grid auto");
  train_cmd->add_option("--epochs", ta.epochs, "epochs (default 10)");
  train_cmd->add_option("--layers", ta.hidden,
                        "hidden layer widths (default 128 128)");
  train_cmd->add_option("--seed", ta.seed, "weight init seed");
  train_cmd
      ->add_option("--precision", ta.precision,
                   "must match the manifest precision when given")
      ->check(CLI::IsMember({"f32", "f64"}));
  train_cmd->add_option("--lr", ta.lr, "Adam learning rate (default 1e-2)");
  train_cmd->add_option("--block-count", ta.block_count,
                        "aggregation row blocks (0 = auto)");
  train_cmd->add_flag("--deterministic,!--no-deterministic", ta.deterministic,
                      "fixed-order reductions (default on)");
  train_cmd->add_flag("--lockstep", ta.lockstep,
                      "single-runnable round-robin scheduler");
  train_cmd->add_option("--machine", ta.machine_file,
                        "machine JSON for --grid auto");
  train_cmd->add_option("--coeffs", ta.coeffs_file, "fitted coefficients JSON");
  train_cmd->add_option("--out", ta.out_dir, "output directory");

  RankArgs ra;
  auto* rank_cmd = app.add_subcommand(
      "rank-configs", "predict and rank 3D grid configurations");
  rank_cmd->add_option("--manifest", ra.manifest_path, "shard manifest path");
  rank_cmd->add_option("--stats", ra.stats_spec,
                       "dataset stats: n=..,nnz=..,dims=D0-H1-...-C");
  rank_cmd->add_option("--layers", ra.hidden,
                       "hidden widths when using --manifest");
  rank_cmd->add_option("--g", ra.g, "total rank count")->required();
  rank_cmd->add_option("--machine", ra.machine_file, "machine JSON file");
  rank_cmd->add_option("--coeffs", ra.coeffs_file, "coefficients JSON file");
  rank_cmd->add_option("--fit-samples", ra.fit_samples,
                       "fit coefficients from a CSV sample log");
  rank_cmd->add_option("--coeffs-out", ra.coeffs_out,
                       "write fitted coefficients here");
  rank_cmd->add_option("--csv", ra.csv_out, "also write the table as CSV");

  ValidateArgs va;
  auto* val_cmd = app.add_subcommand(
      "validate", "compare every factorization against the serial reference");
  val_cmd->add_option("--manifest", va.manifest_path, "shard manifest (f64)");
  val_cmd->add_option("--synth", va.synth, "synthetic dataset spec");
  val_cmd->add_option("--feat-dim", va.feat_dim, "synth feature width");
  val_cmd->add_option("--classes", va.classes, "synth class count");
  val_cmd->add_option("--g", va.g_list, "rank counts to factorize (default 8)");
  val_cmd->add_option("--epochs", va.epochs, "epochs (default 10)");
  val_cmd->add_option("--layers", va.hidden, "hidden widths (default 16)");
  val_cmd->add_option("--seed", va.seed, "seed");
  val_cmd->add_option("--lr", va.lr, "learning rate");
  val_cmd->add_option("--tolerance", va.tolerance,
                      "max relative loss deviation (default 1e-9)");
  val_cmd->add_flag("--inject-fault", va.inject_fault,
                    "skip epoch-0 aggregation all-reduces (negative control)");
  val_cmd->add_flag("--lockstep", va.lockstep, "lockstep scheduler");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitInput : kExitOk;
  }

  try {
    if (*pre_cmd) {
      if (pa.edges.empty() == pa.synth.empty())
        fail(kExitInput, "preprocess needs exactly one of --edges or --synth");
      return pa.precision == "f32" ? run_preprocess<float>(pa)
                                   : run_preprocess<double>(pa);
    }
    if (*train_cmd) {
      auto manifest = shard_io::load_manifest(ta.manifest_path);
      if (!ta.precision.empty() &&
          ta.precision != shard_io::precision_name(manifest.precision))
        fail(kExitInput, "--precision " + ta.precision +
                             " does not match the manifest precision " +
                             shard_io::precision_name(manifest.precision));
      return manifest.precision == 4 ? run_train<float>(ta, manifest)
                                     : run_train<double>(ta, manifest);
    }
    if (*rank_cmd) return run_rank_configs(ra);
    if (*val_cmd) return run_validate(va);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == IoErrorCode::WriteFailed ? kExitOutput : kExitInput;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const MemoryError& e) {
    std::cerr << "error: out of memory: " << e.what() << "\n";
    return kExitResource;
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return kExitResource;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
