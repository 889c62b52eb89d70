#include "doctest.h"
#include "test_util.hpp"

#include "comrl/dataset/collect.hpp"
#include "comrl/dataset/dataset.hpp"
#include "comrl/errors.hpp"
#include "comrl/ndmath/binary_io.hpp"

#include <cmath>
#include <fstream>

using namespace comrl;
using namespace comrl::dataset;

namespace {

OfflineTaskDataset random_dataset(std::size_t n, std::uint64_t seed, int episode = 64) {
  nd::Rng rng(seed);
  envs::TaskSpec task{envs::TaskFamily::PointDir, rng.uniform(0, 6), 1.0, 0.0, static_cast<int>(seed % 17)};
  OfflineTaskDataset ds(task);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(4), a(2), sn(4);
    for (auto& v : s) v = rng.normal();
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : sn) v = rng.normal();
    ds.push_back(s, a, sn, rng.normal(), (i + 1) % static_cast<std::size_t>(episode) == 0);
  }
  return ds;
}

nd::FormatErrc read_code(const std::filesystem::path& p) {
  try {
    read_dataset(p);
  } catch (const nd::FormatError& e) {
    return e.code();
  }
  FAIL("expected a FormatError");
  return nd::FormatErrc::io_error;
}

void write_bytes(const std::filesystem::path& p, const std::string& b) {
  std::ofstream os(p, std::ios::binary);
  os << b;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("roundtrip of random datasets is bit exact") {
  const auto dir = testutil::temp_dir("ds_roundtrip");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const OfflineTaskDataset ds = random_dataset(1 + seed * 13, seed);
    write_dataset(ds, dir / "d.comr");
    CHECK(read_dataset(dir / "d.comr") == ds);
  }
}

TEST_CASE("corrupted files yield distinct codes") {
  const auto dir = testutil::temp_dir("ds_corrupt");
  const OfflineTaskDataset ds = random_dataset(10, 1);
  write_dataset(ds, dir / "ok.comr");
  const std::string bytes = testutil::read_file(dir / "ok.comr");
  CHECK(bytes.substr(0, 4) == "COMR");

  std::string bad = bytes;
  bad[0] = 'X';
  write_bytes(dir / "magic.comr", bad);
  CHECK(read_code(dir / "magic.comr") == nd::FormatErrc::bad_magic);

  bad = bytes;
  bad[4] = 2;
  write_bytes(dir / "version.comr", bad);
  CHECK(read_code(dir / "version.comr") == nd::FormatErrc::version_mismatch);

  // Header says 10 transitions, body holds 9.
  write_bytes(dir / "short.comr", bytes.substr(0, bytes.size() - ds.record_width() * 8));
  CHECK(read_code(dir / "short.comr") == nd::FormatErrc::truncated);

  bad = bytes;
  bad[8] = 5;  // state_dim
  write_bytes(dir / "dims.comr", bad);
  CHECK(read_code(dir / "dims.comr") == nd::FormatErrc::dim_mismatch);

  write_bytes(dir / "extra.comr", bytes + std::string(8, '\0'));
  CHECK(read_code(dir / "extra.comr") == nd::FormatErrc::dim_mismatch);

  bad = bytes;
  bad[24] = '!';  // first byte of the JSON blob
  write_bytes(dir / "meta.comr", bad);
  CHECK(read_code(dir / "meta.comr") == nd::FormatErrc::bad_metadata);
}

TEST_CASE("task metadata roundtrips exactly") {
  envs::TaskSpec t{envs::TaskFamily::PointRandParams, 0.0, 1.2345678901234567, 0.1, 42};
  CHECK(task_from_json(task_to_json(t)) == t);
  CHECK(task_filename(7) == "task_7.comr");
}

TEST_CASE("context of a single episode of length n_ctx is that episode") {
  const OfflineTaskDataset ds = random_dataset(32, 3, 32);
  nd::Rng rng(0);
  const TaskContext c = sample_context(ds, rng, 32);
  CHECK(c.start == 0);
  for (std::size_t r = 0; r < 32; ++r) {
    for (std::size_t k = 0; k < ds.record_width(); ++k) CHECK(c.data(r, k) == ds.record(r)[k]);
  }
}

TEST_CASE("too short dataset is an error") {
  const OfflineTaskDataset ds = random_dataset(31, 3, 64);
  nd::Rng rng(0);
  CHECK_THROWS_AS(sample_context(ds, rng, 32), DataError);
}

TEST_CASE("windows never hold a terminal except in the last row and are subsets") {
  const OfflineTaskDataset ds = random_dataset(640, 5, 40);
  const ContextSampler sampler(ds, 32);
  nd::Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const TaskContext c = sampler.sample(rng);
    CHECK(c.length() == 32);
    for (std::size_t r = 0; r + 1 < 32; ++r) CHECK(c.data(r, ds.record_width() - 1) == 0.0);
    CHECK(c.data(31, 0) == ds.record(c.start + 31)[0]);
  }
}

TEST_CASE("window starts are uniform (chi-square)") {
  const OfflineTaskDataset ds = random_dataset(64 * 4, 6, 64);
  const ContextSampler sampler(ds, 32);
  const std::size_t k = sampler.valid_starts().size();
  REQUIRE(k == 4 * 33);
  std::vector<double> counts(ds.size(), 0.0);
  nd::Rng rng(2);
  const int n = 10000;
  for (int i = 0; i < n; ++i) counts[sampler.sample(rng).start] += 1.0;
  double chi2 = 0.0;
  const double expected = static_cast<double>(n) / static_cast<double>(k);
  for (std::size_t s : sampler.valid_starts()) chi2 += (counts[s] - expected) * (counts[s] - expected) / expected;
  // 99th percentile of chi-square with 131 degrees of freedom.
  CHECK(chi2 < 173.0);
}

TEST_CASE("collect_offline: horizon-length run and determinism") {
  const envs::TaskSpec task{envs::TaskFamily::PointVel, 1.5, 1.0, 0.0, 3};
  CollectConfig cfg;
  cfg.steps = 64;
  CHECK(collect_offline(task, cfg, 1).size() == 64);

  cfg.steps = 400;
  cfg.random_steps = 100;
  cfg.sac.width = 16;
  cfg.sac.depth = 2;
  cfg.sac.batch = 32;
  const OfflineTaskDataset a = collect_offline(task, cfg, 7);
  const OfflineTaskDataset b = collect_offline(task, cfg, 7);
  CHECK(a == b);
  CHECK(a.size() == 400);
  CHECK(collect_offline(task, cfg, 8) != a);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto rec = a.record(i);
    CHECK(std::abs(rec[4]) <= 1.0);
    CHECK(std::abs(rec[5]) <= 1.0);
  }
  cfg.steps = 10;
  CHECK_THROWS_AS(collect_offline(task, cfg, 1), ConfigError);
}

TEST_CASE("sample_batch draws rows of the dataset") {
  const OfflineTaskDataset ds = random_dataset(50, 9);
  nd::Rng rng(3);
  const auto b = sample_batch(ds, 16, rng);
  CHECK(b.size() == 16);
  CHECK(b.z.cols() == 0);
  for (std::size_t i = 0; i < 16; ++i) {
    bool found = false;
    for (std::size_t j = 0; j < ds.size() && !found; ++j) found = ds.record(j)[0] == b.s(i, 0) && ds.reward(j) == b.r[i];
    CHECK(found);
  }
}

}  // TEST_SUITE
