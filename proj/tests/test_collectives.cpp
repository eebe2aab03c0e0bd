#include <vector>

#include "doctest.h"
#include "plexuskit/cluster.hpp"
#include "test_helpers.hpp"

using namespace plexuskit;
using namespace pxt;

TEST_SUITE_BEGIN("collectives");

TEST_CASE("all_gather: singleton group is the identity and moves no bytes") {
  Cluster cluster(GridConfig(1, 1, 1), {});
  auto stats = cluster.run([](RankCtx& ctx) {
    auto local = dense_from<double>(2, 2, {1, 2, 3, 4});
    auto out = ctx.all_gather(local, Axis::Z);
    CHECK(out == local);
  });
  CHECK(stats[0].at(Axis::Z, CollOp::AllGather).ring_numer == 0);
  CHECK(stats[0].at(Axis::Z, CollOp::AllGather).calls == 1);
}

TEST_CASE("all_gather: two ranks concatenate in coordinate order") {
  Cluster cluster(GridConfig(2, 1, 1), {});
  auto stats = cluster.run([](RankCtx& ctx) {
    auto local = ctx.coords().x == 0 ? dense_from<double>(1, 2, {1, 2})
                                     : dense_from<double>(1, 2, {3, 4});
    auto out = ctx.all_gather(local, Axis::X);
    CHECK(out == dense_from<double>(2, 2, {1, 2, 3, 4}));
    auto out_cols = ctx.all_gather(local, Axis::X, ConcatDim::Cols);
    CHECK(out_cols == dense_from<double>(1, 4, {1, 2, 3, 4}));
  });
  // ring accounting: (g-1)/g * total gathered bytes, numer stores g*bytes
  const u64 local_bytes = 2 * sizeof(double);
  CHECK(stats[0].at(Axis::X, CollOp::AllGather).ring_numer ==
        2 * (1 * 2 * local_bytes));
  CHECK(stats[0].bytes(Axis::X, CollOp::AllGather, cluster.grid()) ==
        doctest::Approx(2.0 * local_bytes));
}

TEST_CASE("all_gather: shape disagreement names the offending rank") {
  Cluster cluster(GridConfig(3, 1, 1), {});
  CHECK_THROWS_WITH_AS(
      cluster.run([](RankCtx& ctx) {
        auto local = ctx.coords().x == 2 ? DenseMatrix<double>::zeros(1, 3)
                                         : DenseMatrix<double>::zeros(1, 2);
        ctx.all_gather(local, Axis::X);
      }),
      doctest::Contains("rank 2"), ContractError);
}

TEST_CASE("all_gather: ragged row chunks concatenate (ceil splits)") {
  Cluster cluster(GridConfig(1, 1, 2), {});
  auto stats = cluster.run([](RankCtx& ctx) {
    auto local = ctx.coords().z == 0 ? dense_from<double>(2, 1, {1, 2})
                                     : dense_from<double>(1, 1, {3});
    auto out = ctx.all_gather(local, Axis::Z);
    CHECK(out == dense_from<double>(3, 1, {1, 2, 3}));
  });
  // total gathered = 24 bytes, numer = (g-1)*total = 24
  CHECK(stats[0].at(Axis::Z, CollOp::AllGather).ring_numer == 24);
}

TEST_CASE("all_reduce: sum contract and byte accounting") {
  Cluster cluster(GridConfig(1, 2, 1), {});
  auto stats = cluster.run([](RankCtx& ctx) {
    auto local = dense_from<double>(1, 1, {ctx.coords().y == 0 ? 1.0 : 2.0});
    auto out = ctx.all_reduce(local, Axis::Y);
    CHECK(out.at(0, 0) == 3.0);
  });
  // 2*(g-1)/g*M with g=2, M=8 bytes -> 8 bytes; numer = 16
  for (auto& s : stats) {
    CHECK(s.at(Axis::Y, CollOp::AllReduce).ring_numer == 16);
    CHECK(s.bytes(Axis::Y, CollOp::AllReduce, cluster.grid()) ==
          doctest::Approx(8.0));
  }
}

TEST_CASE("all_reduce equals all_gather-then-local-sum") {
  GridConfig grid(4, 1, 2);
  Cluster cluster(grid, {});
  cluster.run([](RankCtx& ctx) {
    Philox rng(100 + ctx.rank(), 0);
    auto local = random_dense<double>(3, 5, rng);
    auto reduced = ctx.all_reduce(local, Axis::X);
    auto gathered = ctx.all_gather(local, Axis::X);
    auto manual = DenseMatrix<double>::zeros(3, 5);
    for (int part = 0; part < 4; ++part)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j)
          manual.at(i, j) += gathered.at(part * 3 + i, j);
    CHECK(max_abs_diff(reduced, manual) <= 1e-12);
  });
}

TEST_CASE("all_reduce result is identical on every group member") {
  GridConfig grid(2, 2, 2);
  Cluster cluster(grid, {});
  std::vector<DenseMatrix<double>> results(grid.size());
  cluster.run([&](RankCtx& ctx) {
    Philox rng(7 * ctx.rank() + 1, 3);
    auto local = random_dense<double>(4, 4, rng);
    results[ctx.rank()] = ctx.all_reduce(local, Axis::Z);
  });
  for (int r = 0; r < grid.size(); ++r) {
    int partner = grid.rank_of({grid.coords_of(r).x, grid.coords_of(r).y,
                                1 - grid.coords_of(r).z});
    CHECK(results[r] == results[partner]);
  }
}

TEST_CASE("reduce_scatter: row chunks of the sum, ceil split") {
  Cluster cluster(GridConfig(1, 1, 2), {});
  auto stats = cluster.run([](RankCtx& ctx) {
    // 3 rows over 2 ranks: rank z=0 gets rows 0-1, rank z=1 gets row 2
    auto local = dense_from<double>(3, 1, {1, 2, 3});
    auto out = ctx.reduce_scatter(local, Axis::Z);
    if (ctx.coords().z == 0) {
      CHECK(out == dense_from<double>(2, 1, {2, 4}));
    } else {
      CHECK(out == dense_from<double>(1, 1, {6}));
    }
  });
  // (g-1)/g * M with M = 24 bytes -> numer = 24
  CHECK(stats[0].at(Axis::Z, CollOp::ReduceScatter).ring_numer == 24);
}

TEST_CASE("shard-then-gather round trips the full matrix") {
  GridConfig grid(2, 2, 2);
  Philox rng(55, 0);
  auto w = random_dense<double>(8, 6, rng);
  Cluster cluster(grid, {});
  cluster.run([&](RankCtx& ctx) {
    int z = ctx.coords().z;
    auto local = w.row_block(chunk_start(8, 2, z), chunk_start(8, 2, z + 1));
    auto gathered = ctx.all_gather(local, Axis::Z);
    CHECK(gathered == w);
  });
}

TEST_CASE("collectives are deterministic and identical across schedulers") {
  GridConfig grid(2, 2, 1);
  auto run_once = [&](ClusterOptions opts) {
    std::vector<double> out(grid.size());
    Cluster cluster(grid, opts);
    cluster.run([&](RankCtx& ctx) {
      Philox rng(500 + ctx.rank(), 0);
      auto local = random_dense<double>(16, 3, rng);
      auto r1 = ctx.all_reduce(local, Axis::X);
      auto r2 = ctx.all_reduce(r1, Axis::Y);
      auto r3 = ctx.reduce_scatter(r2, Axis::X);
      out[ctx.rank()] = r3.at(0, 0);
    });
    return out;
  };
  auto threaded_a = run_once({});
  auto threaded_b = run_once({});
  ClusterOptions lockstep;
  lockstep.lockstep = true;
  auto stepped = run_once(lockstep);
  CHECK(threaded_a == threaded_b);
  CHECK(threaded_a == stepped);
}

TEST_CASE("thread cap from options keeps the cluster deadlock-free") {
  GridConfig grid(2, 2, 2);
  ClusterOptions opts;
  opts.max_running = 2;
  Cluster cluster(grid, opts);
  cluster.run([](RankCtx& ctx) {
    auto local = dense_from<double>(1, 1, {1.0});
    for (int i = 0; i < 5; ++i) local = ctx.all_reduce(local, Axis::X);
    CHECK(local.at(0, 0) == 32.0);
  });
}

TEST_CASE("PLEXUSKIT_THREADS caps workers without deadlocking") {
  setenv("PLEXUSKIT_THREADS", "1", 1);
  GridConfig grid(2, 2, 1);
  Cluster cluster(grid, {});  // max_running = 0 reads the environment
  cluster.run([](RankCtx& ctx) {
    auto local = dense_from<double>(1, 1, {1.0});
    auto r = ctx.all_reduce(local, Axis::X);
    r = ctx.all_reduce(r, Axis::Y);
    CHECK(r.at(0, 0) == 4.0);
  });
  unsetenv("PLEXUSKIT_THREADS");
}

TEST_CASE("an exception on one rank aborts the whole cluster") {
  GridConfig grid(2, 1, 1);
  Cluster cluster(grid, {});
  CHECK_THROWS_WITH_AS(cluster.run([](RankCtx& ctx) {
                         if (ctx.rank() == 1) throw ContractError("rank 1 boom");
                         auto local = dense_from<double>(1, 1, {1.0});
                         ctx.all_reduce(local, Axis::X);
                       }),
                       "rank 1 boom", ContractError);
}

TEST_CASE("unordered mode still sums correctly") {
  GridConfig grid(4, 1, 1);
  ClusterOptions opts;
  opts.deterministic = false;
  Cluster cluster(grid, opts);
  cluster.run([](RankCtx& ctx) {
    auto local = dense_from<double>(1, 1, {double(1 << ctx.rank())});
    auto out = ctx.all_reduce(local, Axis::X);
    CHECK(out.at(0, 0) == 15.0);
  });
}

TEST_SUITE_END();
