// End-to-end checks of the command-line binary; the path comes from the
// PLEXUSKIT_CLI environment variable set by ctest.

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("PLEXUSKIT_CLI");
  REQUIRE_MESSAGE(p != nullptr, "PLEXUSKIT_CLI not set");
  return p;
}

int run(const std::string& args, const std::string& log) {
  const std::string cmd = cli_path() + " " + args + " >" + log + " 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count_lines(const std::string& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("plexuskit_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  static inline int counter = 0;
};

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("preprocess + train + validate round trip") {
  TempDir dir;
  const std::string shards = (dir.path / "shards").string();
  const std::string log = (dir.path / "log.txt").string();

  // preprocess a small SBM twice: balance printed, outputs byte-identical
  CHECK(run("preprocess --synth sbm:n=96,k=4,p_in=0.3,p_out=0.02 --feat-dim 8 "
            "--classes 4 --p 3 --q 3 --seed 5 --out " +
                shards,
            log) == 0);
  auto out1 = slurp(log);
  CHECK(out1.find("balance") != std::string::npos);
  CHECK(out1.find("double permutation") != std::string::npos);

  const std::string shards2 = (dir.path / "shards2").string();
  CHECK(run("preprocess --synth sbm:n=96,k=4,p_in=0.3,p_out=0.02 --feat-dim 8 "
            "--classes 4 --p 3 --q 3 --seed 5 --out " +
                shards2,
            log) == 0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      auto name = "shard_" + std::to_string(i) + "_" + std::to_string(j) + ".plxs";
      CHECK(slurp(shards + "/" + name) == slurp(shards2 + "/" + name));
    }

  // train: metrics row count is epochs * (ranks + 1) plus the header
  const std::string out = (dir.path / "run").string();
  CHECK(run("train --manifest " + shards +
                " --grid 2,1,2 --epochs 3 --layers 8 --seed 2 --out " + out,
            log) == 0);
  CHECK(count_lines(out + "/metrics.csv") == 1 + 3 * (4 + 1));
  CHECK(count_lines(out + "/summary.csv") == 2);
  CHECK(fs::exists(out + "/model.plxm"));
  CHECK(fs::exists(out + "/comm_stats.csv"));

  // auto grid selection picks the top-ranked configuration and prints it
  const std::string mpath = (dir.path / "machine.json").string();
  std::ofstream(mpath) << R"({"g_node":4,"beta_intra":2e11,"beta_inter":2.5e10})";
  const std::string out2 = (dir.path / "run_auto").string();
  CHECK(run("train --manifest " + shards +
                " --grid auto --ranks 4 --machine " + mpath +
                " --epochs 2 --layers 8 --seed 2 --out " + out2,
            log) == 0);
  CHECK(slurp(log).find("auto-selected grid") != std::string::npos);

  // rerunning train with the same seed reproduces the deterministic fields
  const std::string out3 = (dir.path / "run_again").string();
  CHECK(run("train --manifest " + shards +
                " --grid 2,1,2 --epochs 3 --layers 8 --seed 2 --out " + out3,
            log) == 0);
  auto pick_deterministic = [](const std::string& csv) {
    // keep epoch, rank, loss, accuracy and the counter columns
    std::istringstream in(csv);
    std::string line, kept;
    while (std::getline(in, line)) {
      auto f = [&](int idx) {
        std::istringstream ls(line);
        std::string field;
        for (int i = 0; i <= idx; ++i) std::getline(ls, field, ',');
        return field;
      };
      for (int idx : {0, 1, 2, 3, 10, 11, 12, 13, 14}) kept += f(idx) + ";";
      kept += "\n";
    }
    return kept;
  };
  CHECK(pick_deterministic(slurp(out + "/metrics.csv")) ==
        pick_deterministic(slurp(out3 + "/metrics.csv")));

  // precision flag must match the manifest
  CHECK(run("train --manifest " + shards +
                " --grid 1,1,1 --epochs 1 --layers 8 --precision f32 --out " +
                (dir.path / "bad").string(),
            log) == 2);

  // validate over every factorization of 1,2,4
  CHECK(run("validate --manifest " + shards +
                " --g 1 --g 2 --g 4 --epochs 3 --layers 8 --seed 2",
            log) == 0);
  auto vout = slurp(log);
  CHECK(vout.find("PASS config (2,1,1)") != std::string::npos);
  CHECK(vout.find("FAIL") == std::string::npos);

  // negative control: the injected fault must fail and name a config
  CHECK(run("validate --manifest " + shards +
                " --g 2 --epochs 2 --layers 8 --seed 2 --inject-fault",
            log) == 1);
  CHECK(slurp(log).find("FAIL config (") != std::string::npos);
}

TEST_CASE("rank-configs emits a sorted table") {
  TempDir dir;
  const std::string log = (dir.path / "log.txt").string();
  const std::string csv = (dir.path / "rank.csv").string();
  CHECK(run("rank-configs --stats n=2449029,nnz=126167053,dims=100-128-128-47 "
            "--g 8 --csv " +
                csv,
            log) == 0);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "gx,gy,gz,spmm_s,comm_s,total_s,clamped");
  double prev = -1;
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    auto last_comma = line.rfind(',');
    auto second_last = line.rfind(',', last_comma - 1);
    double total = std::stod(line.substr(second_last + 1, last_comma - second_last - 1));
    CHECK(total >= prev);
    prev = total;
    rows++;
  }
  CHECK(rows == 10);
}

TEST_CASE("grid 1,1,1 ranking shows zero communication") {
  TempDir dir;
  const std::string log = (dir.path / "log.txt").string();
  CHECK(run("rank-configs --stats n=1000,nnz=9000,dims=16-8-4 --g 1", log) == 0);
  auto out = slurp(log);
  CHECK(out.find("1,1,1,") != std::string::npos);
  CHECK(out.find(",0,") != std::string::npos);  // comm_s column
}

TEST_CASE("bad inputs produce exit code 2") {
  TempDir dir;
  const std::string log = (dir.path / "log.txt").string();
  CHECK(run("train --manifest " + dir.str() + "/missing --out " + dir.str(),
            log) == 2);
  CHECK(run("preprocess --out " + dir.str(), log) == 2);  // no input at all
  CHECK(run("validate --g 2", log) == 2);
  CHECK(run("rank-configs --g 4", log) == 2);
}

TEST_SUITE_END();
