#pragma once

// On-disk formats. Everything is little-endian binary with fixed-width
// fields so round trips are bit-exact:
//   PLXS  2D dataset shard (both adjacency variants + feature/label ranges)
//   PLXD  dense matrix dump
//   PLXC  CSR matrix dump
//   PLXM  trained model dump
// A JSON manifest sits next to the PLXS files and carries the shard grid,
// per-shard nnz, the permutation seed and per-section fnv1a64 checksums.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "plexuskit/graph.hpp"

namespace plexuskit {
namespace shard_io {

constexpr u32 kShardVersion = 1;
constexpr int kSectionCount = 4;
enum Section { kCsrEven = 0, kCsrOdd = 1, kFeatures = 2, kLabels = 3 };

template <typename T>
constexpr u32 precision_tag() {
  return sizeof(T);
}

inline std::string precision_name(u32 tag) { return tag == 4 ? "f32" : "f64"; }

struct ShardFileInfo {
  int i = 0, j = 0;
  std::string path;  // relative to the manifest directory
  u64 row0 = 0, row1 = 0;    // adjacency block rows
  u64 col0 = 0, col1 = 0;    // adjacency block cols
  u64 fcol0 = 0, fcol1 = 0;  // feature column range
  u64 nnz_even = 0, nnz_odd = 0;
  u64 checksum[kSectionCount] = {0, 0, 0, 0};
};

struct ShardManifest {
  std::string dataset;
  std::string dir;  // directory holding manifest + shard files
  u32 precision = 8;
  std::size_t n = 0, feat_dim = 0;
  u32 classes = 0;
  int p = 0, q = 0;
  u64 perm_seed = 0;
  u64 nnz_even = 0, nnz_odd = 0;
  std::vector<ShardFileInfo> files;  // row-major (i, j)

  const ShardFileInfo& file(int i, int j) const {
    check(i >= 0 && i < p && j >= 0 && j < q, "manifest: shard index out of range");
    return files[static_cast<std::size_t>(i) * q + j];
  }
  std::string file_path(int i, int j) const {
    return (std::filesystem::path(dir) / file(i, j).path).string();
  }
};

namespace detail {

class BufWriter {
public:
  void raw(const void* p, std::size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  template <typename V>
  void scalar(V v) {
    raw(&v, sizeof(V));
  }
  template <typename V>
  void array(const std::vector<V>& v) {
    raw(v.data(), v.size() * sizeof(V));
  }
  const std::string& str() const { return buf_; }

private:
  std::string buf_;
};

}  // namespace detail

// Tracks how many payload bytes were actually read; the parallel loader's
// memory/IO claims are asserted against this.
class ShardFileReader {
public:
  ShardFileReader(const ShardManifest& manifest, int i, int j)
      : info_(manifest.file(i, j)), path_(manifest.file_path(i, j)) {
    in_.open(path_, std::ios::binary);
    if (!in_) throw IoError(IoErrorCode::MissingFile, "missing shard file " + path_);
    char magic[4];
    read_raw(magic, 4, 0);
    if (std::memcmp(magic, "PLXS", 4) != 0)
      throw IoError(IoErrorCode::BadFormat, path_ + ": not a shard file");
    u32 version = read_scalar<u32>();
    if (version != kShardVersion)
      throw IoError(IoErrorCode::BadFormat, path_ + ": unsupported version");
    precision_ = read_scalar<u32>();
    if (precision_ != manifest.precision)
      throw IoError(IoErrorCode::ManifestMismatch,
                    path_ + ": precision disagrees with manifest");
    read_scalar<u32>();  // reserved
    u64 ranges[6];
    for (auto& r : ranges) r = read_scalar<u64>();
    if (ranges[0] != info_.row0 || ranges[1] != info_.row1 ||
        ranges[2] != info_.col0 || ranges[3] != info_.col1 ||
        ranges[4] != info_.fcol0 || ranges[5] != info_.fcol1)
      throw IoError(IoErrorCode::ManifestMismatch,
                    path_ + ": block ranges disagree with manifest");
    for (int s = 0; s < kSectionCount; ++s) {
      sec_off_[s] = read_scalar<u64>();
      sec_size_[s] = read_scalar<u64>();
    }
  }

  const ShardFileInfo& info() const { return info_; }
  const std::string& path() const { return path_; }
  u64 bytes_read() const { return bytes_read_; }

  // Rows [r0, r1) of one adjacency variant, local indices preserved. A
  // full-range read streams the whole section in order, so its checksum is
  // verified on the fly at no extra IO; partial reads cannot be.
  template <typename T>
  CsrMatrix<T> read_csr_rows(Section sec, u64 r0, u64 r1) {
    check(sec == kCsrEven || sec == kCsrOdd, "read_csr_rows: bad section");
    const u64 rows = info_.row1 - info_.row0;
    const u64 cols = info_.col1 - info_.col0;
    check(r0 <= r1 && r1 <= rows, "read_csr_rows: row range out of bounds");
    Fnv1a64 hash;
    Fnv1a64* hp = (r0 == 0 && r1 == rows) ? &hash : nullptr;
    u64 head[3];
    section_read(sec, 0, head, sizeof(head), hp);
    if (head[0] != rows || head[1] != cols)
      throw IoError(IoErrorCode::ManifestMismatch,
                    path_ + ": CSR section shape disagrees with manifest");
    const u64 nnz = head[2];
    std::vector<u64> row_ptr(r1 - r0 + 1);
    section_read(sec, sizeof(head) + r0 * sizeof(u64), row_ptr.data(),
                 row_ptr.size() * sizeof(u64), hp);
    const u64 e0 = row_ptr.front(), e1 = row_ptr.back();
    check(e0 <= e1 && e1 <= nnz, "read_csr_rows: corrupt row pointers");
    std::vector<u32> col_idx(e1 - e0);
    std::vector<T> values(e1 - e0);
    const u64 idx_base = sizeof(head) + (rows + 1) * sizeof(u64);
    const u64 val_base = idx_base + nnz * sizeof(u32);
    section_read(sec, idx_base + e0 * sizeof(u32), col_idx.data(),
                 col_idx.size() * sizeof(u32), hp);
    section_read(sec, val_base + e0 * sizeof(T), values.data(),
                 values.size() * sizeof(T), hp);
    if (hp) check_digest(sec, hash);
    for (auto& r : row_ptr) r -= e0;
    return CsrMatrix<T>(r1 - r0, cols, std::move(row_ptr), std::move(col_idx),
                        std::move(values));
  }

  template <typename T>
  CsrMatrix<T> read_csr(Section sec) {
    return read_csr_rows<T>(sec, 0, info_.row1 - info_.row0);
  }

  // Feature rows [r0, r1) of this file's column chunk.
  template <typename T>
  DenseMatrix<T> read_feature_rows(u64 r0, u64 r1) {
    const u64 rows = info_.row1 - info_.row0;
    const u64 cols = info_.fcol1 - info_.fcol0;
    check(r0 <= r1 && r1 <= rows, "read_feature_rows: row range out of bounds");
    Fnv1a64 hash;
    Fnv1a64* hp = (r0 == 0 && r1 == rows) ? &hash : nullptr;
    u64 head[2];
    section_read(kFeatures, 0, head, sizeof(head), hp);
    if (head[0] != rows || head[1] != cols)
      throw IoError(IoErrorCode::ManifestMismatch,
                    path_ + ": feature section shape disagrees with manifest");
    auto out = DenseMatrix<T>::zeros(r1 - r0, cols);
    section_read(kFeatures, sizeof(head) + r0 * cols * sizeof(T), out.data(),
                 out.size() * sizeof(T), hp);
    if (hp) check_digest(kFeatures, hash);
    return out;
  }

  template <typename T>
  DenseMatrix<T> read_features() {
    return read_feature_rows<T>(0, info_.row1 - info_.row0);
  }

  struct LabelSlice {
    std::vector<u32> labels_row, labels_col;
    std::vector<u8> mask_row, mask_col;
  };

  LabelSlice read_labels(u64 r0, u64 r1) {
    const u64 rows = info_.row1 - info_.row0;
    check(r0 <= r1 && r1 <= rows, "read_labels: row range out of bounds");
    Fnv1a64 hash;
    Fnv1a64* hp = (r0 == 0 && r1 == rows) ? &hash : nullptr;
    u64 count;
    section_read(kLabels, 0, &count, sizeof(count), hp);
    if (count != rows)
      throw IoError(IoErrorCode::ManifestMismatch,
                    path_ + ": label section length disagrees with manifest");
    LabelSlice out;
    out.labels_row.resize(r1 - r0);
    out.labels_col.resize(r1 - r0);
    out.mask_row.resize(r1 - r0);
    out.mask_col.resize(r1 - r0);
    u64 base = sizeof(u64);
    section_read(kLabels, base + r0 * sizeof(u32), out.labels_row.data(),
                 out.labels_row.size() * sizeof(u32), hp);
    base += count * sizeof(u32);
    section_read(kLabels, base + r0 * sizeof(u32), out.labels_col.data(),
                 out.labels_col.size() * sizeof(u32), hp);
    base += count * sizeof(u32);
    section_read(kLabels, base + r0, out.mask_row.data(), r1 - r0, hp);
    base += count;
    section_read(kLabels, base + r0, out.mask_col.data(), r1 - r0, hp);
    if (hp) check_digest(kLabels, hash);
    return out;
  }

  LabelSlice read_all_labels() {
    return read_labels(0, info_.row1 - info_.row0);
  }

  // Reads and checksums an entire section against the manifest.
  void verify_section(Section sec) {
    std::vector<char> buf(sec_size_[sec]);
    section_read(sec, 0, buf.data(), buf.size());
    if (Fnv1a64::of(buf.data(), buf.size()) != info_.checksum[sec])
      throw IoError(IoErrorCode::ChecksumMismatch,
                    path_ + ": checksum mismatch in section " +
                        std::to_string(static_cast<int>(sec)));
  }

  void verify_all() {
    for (int s = 0; s < kSectionCount; ++s) verify_section(static_cast<Section>(s));
  }

private:
  void check_digest(Section sec, const Fnv1a64& hash) const {
    if (hash.digest() != info_.checksum[sec])
      throw IoError(IoErrorCode::ChecksumMismatch,
                    path_ + ": checksum mismatch in section " +
                        std::to_string(static_cast<int>(sec)));
  }

  void section_read(Section sec, u64 offset, void* dst, std::size_t n,
                    Fnv1a64* hash = nullptr) {
    if (offset + n > sec_size_[sec])
      throw IoError(IoErrorCode::TruncatedFile,
                    path_ + ": truncated section " + std::to_string(sec));
    read_raw(dst, n, sec_off_[sec] + offset);
    if (hash) hash->update(dst, n);
  }

  void read_raw(void* dst, std::size_t n, std::optional<u64> seek_to) {
    if (seek_to) in_.seekg(static_cast<std::streamoff>(*seek_to));
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      throw IoError(IoErrorCode::TruncatedFile, path_ + ": truncated file");
    bytes_read_ += n;
  }

  template <typename V>
  V read_scalar() {
    V v;
    read_raw(&v, sizeof(V), std::nullopt);
    return v;
  }

  ShardFileInfo info_;
  std::string path_;
  std::ifstream in_;
  u32 precision_ = 0;
  u64 sec_off_[kSectionCount] = {};
  u64 sec_size_[kSectionCount] = {};
  u64 bytes_read_ = 0;
};

// Whole-shard payload with verified checksums.
template <typename T>
struct ShardPayload {
  ShardFileInfo info;
  CsrMatrix<T> a_even, a_odd;
  DenseMatrix<T> features;
  ShardFileReader::LabelSlice labels;
};

template <typename T>
ShardPayload<T> read_shard(const ShardManifest& manifest, int i, int j) {
  check(manifest.precision == precision_tag<T>(),
        "read_shard: scalar type does not match manifest precision");
  // full-range reads verify every section checksum on the fly
  ShardFileReader reader(manifest, i, j);
  ShardPayload<T> out;
  out.info = reader.info();
  out.a_even = reader.read_csr<T>(kCsrEven);
  out.a_odd = reader.read_csr<T>(kCsrOdd);
  out.features = reader.read_features<T>();
  out.labels = reader.read_all_labels();
  return out;
}

template <typename T>
ShardManifest write_shards(const PreprocessedDataset<T>& pre, int p, int q,
                           const std::string& dir,
                           const std::string& dataset_name) {
  check(p >= 1 && q >= 1, "write_shards: p and q must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  ShardManifest manifest;
  manifest.dataset = dataset_name;
  manifest.dir = dir;
  manifest.precision = precision_tag<T>();
  manifest.n = pre.n;
  manifest.feat_dim = pre.feat_dim;
  manifest.classes = pre.num_classes;
  manifest.p = p;
  manifest.q = q;
  manifest.perm_seed = pre.perm_seed;
  manifest.nnz_even = pre.a_even.nnz();
  manifest.nnz_odd = pre.a_odd.nnz();

  for (int i = 0; i < p; ++i) {
    const u64 r0 = chunk_start(pre.n, p, i), r1 = chunk_start(pre.n, p, i + 1);
    for (int j = 0; j < q; ++j) {
      const u64 c0 = chunk_start(pre.n, q, j), c1 = chunk_start(pre.n, q, j + 1);
      const u64 f0 = chunk_start(pre.feat_dim, q, j),
                f1 = chunk_start(pre.feat_dim, q, j + 1);
      ShardFileInfo info;
      info.i = i;
      info.j = j;
      info.path = "shard_" + std::to_string(i) + "_" + std::to_string(j) + ".plxs";
      info.row0 = r0;
      info.row1 = r1;
      info.col0 = c0;
      info.col1 = c1;
      info.fcol0 = f0;
      info.fcol1 = f1;

      std::string sections[kSectionCount];
      auto csr_section = [&](const CsrMatrix<T>& block) {
        detail::BufWriter w;
        w.scalar<u64>(block.rows());
        w.scalar<u64>(block.cols());
        w.scalar<u64>(block.nnz());
        w.array(block.row_ptr());
        w.array(block.col_idx());
        w.array(block.values());
        return w.str();
      };
      auto even_block = pre.a_even.block(r0, r1, c0, c1);
      auto odd_block = pre.a_odd.block(r0, r1, c0, c1);
      info.nnz_even = even_block.nnz();
      info.nnz_odd = odd_block.nnz();
      sections[kCsrEven] = csr_section(even_block);
      sections[kCsrOdd] = csr_section(odd_block);
      {
        detail::BufWriter w;
        auto fblock = pre.features.block(r0, r1, f0, f1);
        w.scalar<u64>(fblock.rows());
        w.scalar<u64>(fblock.cols());
        w.raw(fblock.data(), fblock.size() * sizeof(T));
        sections[kFeatures] = w.str();
      }
      {
        detail::BufWriter w;
        w.scalar<u64>(r1 - r0);
        w.raw(pre.labels_row_order.data() + r0, (r1 - r0) * sizeof(u32));
        w.raw(pre.labels_col_order.data() + r0, (r1 - r0) * sizeof(u32));
        w.raw(pre.mask_row_order.data() + r0, r1 - r0);
        w.raw(pre.mask_col_order.data() + r0, r1 - r0);
        sections[kLabels] = w.str();
      }

      detail::BufWriter header;
      header.raw("PLXS", 4);
      header.scalar<u32>(kShardVersion);
      header.scalar<u32>(precision_tag<T>());
      header.scalar<u32>(0);
      for (u64 v : {r0, r1, c0, c1, f0, f1}) header.scalar<u64>(v);
      u64 offset = header.str().size() + kSectionCount * 2 * sizeof(u64);
      for (int s = 0; s < kSectionCount; ++s) {
        header.scalar<u64>(offset);
        header.scalar<u64>(sections[s].size());
        info.checksum[s] = Fnv1a64::of(sections[s].data(), sections[s].size());
        offset += sections[s].size();
      }

      const std::string full_path =
          (std::filesystem::path(dir) / info.path).string();
      std::ofstream out(full_path, std::ios::binary | std::ios::trunc);
      if (!out)
        throw IoError(IoErrorCode::WriteFailed, "cannot write shard file " + full_path);
      out.write(header.str().data(), header.str().size());
      for (int s = 0; s < kSectionCount; ++s)
        out.write(sections[s].data(), sections[s].size());
      out.flush();
      if (!out)
        throw IoError(IoErrorCode::WriteFailed, "write failed for " + full_path);
      manifest.files.push_back(info);
    }
  }

  // manifest JSON alongside the shard files
  nlohmann::json j;
  j["format"] = "plxs-1";
  j["dataset"] = manifest.dataset;
  j["rng"] = Philox::kName;
  j["perm_seed"] = manifest.perm_seed;
  j["precision"] = precision_name(manifest.precision);
  j["n"] = manifest.n;
  j["feat_dim"] = manifest.feat_dim;
  j["classes"] = manifest.classes;
  j["p"] = manifest.p;
  j["q"] = manifest.q;
  j["nnz_even"] = manifest.nnz_even;
  j["nnz_odd"] = manifest.nnz_odd;
  j["checksum"] = "fnv1a64";
  auto hex = [](u64 v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
  };
  for (const auto& f : manifest.files) {
    nlohmann::json jf;
    jf["i"] = f.i;
    jf["j"] = f.j;
    jf["path"] = f.path;
    jf["row0"] = f.row0;
    jf["row1"] = f.row1;
    jf["col0"] = f.col0;
    jf["col1"] = f.col1;
    jf["fcol0"] = f.fcol0;
    jf["fcol1"] = f.fcol1;
    jf["nnz_even"] = f.nnz_even;
    jf["nnz_odd"] = f.nnz_odd;
    jf["sum_even"] = hex(f.checksum[kCsrEven]);
    jf["sum_odd"] = hex(f.checksum[kCsrOdd]);
    jf["sum_features"] = hex(f.checksum[kFeatures]);
    jf["sum_labels"] = hex(f.checksum[kLabels]);
    j["files"].push_back(jf);
  }
  const std::string manifest_path =
      (std::filesystem::path(dir) / "manifest.json").string();
  std::ofstream mf(manifest_path);
  if (!mf)
    throw IoError(IoErrorCode::WriteFailed, "cannot write manifest " + manifest_path);
  mf << j.dump(2) << "\n";
  return manifest;
}

inline ShardManifest load_manifest(const std::string& path_or_dir) {
  namespace fs = std::filesystem;
  fs::path path(path_or_dir);
  if (fs::is_directory(path)) path /= "manifest.json";
  std::ifstream in(path);
  if (!in)
    throw IoError(IoErrorCode::MissingFile, "cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoErrorCode::BadFormat,
                  "manifest " + path.string() + ": " + e.what());
  }
  ShardManifest m;
  try {
    m.dataset = j.value("dataset", "");
    m.dir = path.parent_path().string();
    if (m.dir.empty()) m.dir = ".";
    m.precision = j.at("precision").get<std::string>() == "f32" ? 4 : 8;
    m.n = j.at("n").get<u64>();
    m.feat_dim = j.at("feat_dim").get<u64>();
    m.classes = j.at("classes").get<u32>();
    m.p = j.at("p").get<int>();
    m.q = j.at("q").get<int>();
    m.perm_seed = j.at("perm_seed").get<u64>();
    m.nnz_even = j.at("nnz_even").get<u64>();
    m.nnz_odd = j.at("nnz_odd").get<u64>();
    for (const auto& jf : j.at("files")) {
      ShardFileInfo f;
      f.i = jf.at("i").get<int>();
      f.j = jf.at("j").get<int>();
      f.path = jf.at("path").get<std::string>();
      f.row0 = jf.at("row0").get<u64>();
      f.row1 = jf.at("row1").get<u64>();
      f.col0 = jf.at("col0").get<u64>();
      f.col1 = jf.at("col1").get<u64>();
      f.fcol0 = jf.at("fcol0").get<u64>();
      f.fcol1 = jf.at("fcol1").get<u64>();
      f.nnz_even = jf.at("nnz_even").get<u64>();
      f.nnz_odd = jf.at("nnz_odd").get<u64>();
      f.checksum[kCsrEven] = std::stoull(jf.at("sum_even").get<std::string>(), nullptr, 16);
      f.checksum[kCsrOdd] = std::stoull(jf.at("sum_odd").get<std::string>(), nullptr, 16);
      f.checksum[kFeatures] =
          std::stoull(jf.at("sum_features").get<std::string>(), nullptr, 16);
      f.checksum[kLabels] =
          std::stoull(jf.at("sum_labels").get<std::string>(), nullptr, 16);
      m.files.push_back(f);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoErrorCode::BadFormat,
                  "manifest " + path.string() + ": " + e.what());
  }
  // structural consistency
  if (static_cast<int>(m.files.size()) != m.p * m.q)
    throw IoError(IoErrorCode::ManifestMismatch,
                  "manifest lists " + std::to_string(m.files.size()) +
                      " files but the grid is " + std::to_string(m.p) + "x" +
                      std::to_string(m.q));
  u64 sum_even = 0, sum_odd = 0;
  std::vector<ShardFileInfo> ordered(m.files.size());
  std::vector<bool> seen(m.files.size(), false);
  for (const auto& f : m.files) {
    if (f.i < 0 || f.i >= m.p || f.j < 0 || f.j >= m.q ||
        seen[static_cast<std::size_t>(f.i) * m.q + f.j])
      throw IoError(IoErrorCode::ManifestMismatch,
                    "manifest shard indices are not a p x q grid");
    seen[static_cast<std::size_t>(f.i) * m.q + f.j] = true;
    ordered[static_cast<std::size_t>(f.i) * m.q + f.j] = f;
    sum_even += f.nnz_even;
    sum_odd += f.nnz_odd;
  }
  m.files = std::move(ordered);
  if (sum_even != m.nnz_even || sum_odd != m.nnz_odd)
    throw IoError(IoErrorCode::ManifestMismatch,
                  "per-shard nnz does not sum to the manifest total");
  return m;
}

// --------------------------------------------------------------------------
// standalone dumps and text ingestion

template <typename T>
void write_dense_file(const DenseMatrix<T>& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorCode::WriteFailed, "cannot write " + path);
  detail::BufWriter w;
  w.raw("PLXD", 4);
  w.scalar<u32>(1);
  w.scalar<u32>(precision_tag<T>());
  w.scalar<u32>(0);
  w.scalar<u64>(m.rows());
  w.scalar<u64>(m.cols());
  out.write(w.str().data(), w.str().size());
  out.write(reinterpret_cast<const char*>(m.data()), m.size() * sizeof(T));
  if (!out) throw IoError(IoErrorCode::WriteFailed, "write failed for " + path);
}

template <typename T>
DenseMatrix<T> read_dense_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorCode::MissingFile, "cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "PLXD", 4) != 0)
    throw IoError(IoErrorCode::BadFormat, path + ": not a dense dump");
  u32 meta[3];
  u64 shape[2];
  in.read(reinterpret_cast<char*>(meta), sizeof(meta));
  in.read(reinterpret_cast<char*>(shape), sizeof(shape));
  if (!in) throw IoError(IoErrorCode::TruncatedFile, path + ": truncated header");
  if (meta[1] != precision_tag<T>())
    throw IoError(IoErrorCode::BadFormat, path + ": precision mismatch");
  auto m = DenseMatrix<T>::zeros(shape[0], shape[1]);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(T)));
  if (in.gcount() != static_cast<std::streamsize>(m.size() * sizeof(T)))
    throw IoError(IoErrorCode::TruncatedFile, path + ": truncated payload");
  return m;
}

template <typename T>
void write_csr_file(const CsrMatrix<T>& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorCode::WriteFailed, "cannot write " + path);
  detail::BufWriter w;
  w.raw("PLXC", 4);
  w.scalar<u32>(1);
  w.scalar<u32>(precision_tag<T>());
  w.scalar<u32>(0);
  w.scalar<u64>(m.rows());
  w.scalar<u64>(m.cols());
  w.scalar<u64>(m.nnz());
  w.array(m.row_ptr());
  w.array(m.col_idx());
  w.array(m.values());
  out.write(w.str().data(), w.str().size());
  if (!out) throw IoError(IoErrorCode::WriteFailed, "write failed for " + path);
}

template <typename T>
CsrMatrix<T> read_csr_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorCode::MissingFile, "cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "PLXC", 4) != 0)
    throw IoError(IoErrorCode::BadFormat, path + ": not a CSR dump");
  u32 meta[3];
  u64 shape[3];
  in.read(reinterpret_cast<char*>(meta), sizeof(meta));
  in.read(reinterpret_cast<char*>(shape), sizeof(shape));
  if (!in) throw IoError(IoErrorCode::TruncatedFile, path + ": truncated header");
  if (meta[1] != precision_tag<T>())
    throw IoError(IoErrorCode::BadFormat, path + ": precision mismatch");
  std::vector<u64> row_ptr(shape[0] + 1);
  std::vector<u32> col_idx(shape[2]);
  std::vector<T> values(shape[2]);
  auto read_vec = [&](void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
      throw IoError(IoErrorCode::TruncatedFile, path + ": truncated payload");
  };
  read_vec(row_ptr.data(), row_ptr.size() * sizeof(u64));
  read_vec(col_idx.data(), col_idx.size() * sizeof(u32));
  read_vec(values.data(), values.size() * sizeof(T));
  return CsrMatrix<T>(shape[0], shape[1], std::move(row_ptr),
                      std::move(col_idx), std::move(values));
}

// Whitespace-separated "src dst" pairs, one per line; '#' starts a comment.
struct EdgeListFile {
  std::size_t max_node = 0;  // largest endpoint seen
  std::vector<std::pair<u32, u32>> edges;
};

inline EdgeListFile parse_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorCode::MissingFile, "cannot open edge list " + path);
  EdgeListFile out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    u64 u, v;
    if (!(ss >> u)) continue;  // blank or comment-only line
    u64 junk_check;
    if (!(ss >> v) || (ss >> junk_check))
      throw IoError(IoErrorCode::BadFormat,
                    path + ":" + std::to_string(lineno) +
                        ": expected 'src dst' per line");
    check(u <= 0xFFFFFFFFull && v <= 0xFFFFFFFFull,
          "edge list: node id exceeds 32-bit range");
    out.edges.emplace_back(static_cast<u32>(u), static_cast<u32>(v));
    out.max_node = std::max({out.max_node, static_cast<std::size_t>(u),
                             static_cast<std::size_t>(v)});
  }
  return out;
}

// Trained model dump: layer weights then the trained input features.
template <typename T>
void write_model_file(const std::vector<DenseMatrix<T>>& weights,
                      const DenseMatrix<T>& features, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorCode::WriteFailed, "cannot write " + path);
  detail::BufWriter w;
  w.raw("PLXM", 4);
  w.scalar<u32>(1);
  w.scalar<u32>(precision_tag<T>());
  w.scalar<u32>(static_cast<u32>(weights.size()));
  auto dense = [&w](const DenseMatrix<T>& m) {
    w.scalar<u64>(m.rows());
    w.scalar<u64>(m.cols());
    w.raw(m.data(), m.size() * sizeof(T));
  };
  for (const auto& m : weights) dense(m);
  dense(features);
  out.write(w.str().data(), w.str().size());
  if (!out) throw IoError(IoErrorCode::WriteFailed, "write failed for " + path);
}

template <typename T>
std::pair<std::vector<DenseMatrix<T>>, DenseMatrix<T>> read_model_file(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorCode::MissingFile, "cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "PLXM", 4) != 0)
    throw IoError(IoErrorCode::BadFormat, path + ": not a model dump");
  u32 meta[3];
  in.read(reinterpret_cast<char*>(meta), sizeof(meta));
  if (!in) throw IoError(IoErrorCode::TruncatedFile, path + ": truncated header");
  if (meta[1] != precision_tag<T>())
    throw IoError(IoErrorCode::BadFormat, path + ": precision mismatch");
  auto dense = [&]() {
    u64 shape[2];
    in.read(reinterpret_cast<char*>(shape), sizeof(shape));
    if (!in) throw IoError(IoErrorCode::TruncatedFile, path + ": truncated");
    auto m = DenseMatrix<T>::zeros(shape[0], shape[1]);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(T)));
    if (in.gcount() != static_cast<std::streamsize>(m.size() * sizeof(T)))
      throw IoError(IoErrorCode::TruncatedFile, path + ": truncated");
    return m;
  };
  std::vector<DenseMatrix<T>> weights;
  for (u32 l = 0; l < meta[2]; ++l) weights.push_back(dense());
  auto features = dense();
  return {std::move(weights), std::move(features)};
}

}  // namespace shard_io
}  // namespace plexuskit
