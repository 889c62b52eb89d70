#pragma once

#include "comrl/errors.hpp"
#include "comrl/ndmath/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace comrl::nd {

enum class FormatErrc {
  io_error,
  bad_magic,
  version_mismatch,
  truncated,
  dim_mismatch,
  bad_metadata,
};

std::string_view to_string(FormatErrc code);

class FormatError : public DataError {
 public:
  FormatError(FormatErrc code, const std::string& detail)
      : DataError(std::string(to_string(code)) + ": " + detail), code_(code) {}
  FormatErrc code() const { return code_; }

 private:
  FormatErrc code_;
};

/// Little-endian byte sink.
class BinaryWriter {
 public:
  void u32(std::uint32_t v);
  void f64(double v);
  void raw(std::string_view bytes);
  /// u32 length prefix followed by the bytes.
  void blob(std::string_view bytes);

  const std::string& bytes() const { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::string buf_;
};

/// Little-endian byte source over an in-memory file image; running past
/// the end raises FormatErrc::truncated.
class BinaryReader {
 public:
  explicit BinaryReader(std::string bytes) : buf_(std::move(bytes)) {}
  static BinaryReader load(const std::filesystem::path& path);

  std::uint32_t u32();
  double f64();
  std::string raw(std::size_t n);
  std::string blob();

  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::string buf_;
  std::size_t pos_ = 0;
};

/// Checkpoint container: magic, version, JSON config blob, then tensors in
/// declaration order as (u32 rows, u32 cols, rows*cols f64).
struct Checkpoint {
  std::string config_json;
  std::vector<Tensor> tensors;
};

void write_checkpoint(const std::filesystem::path& path, std::string_view magic, std::uint32_t version,
                      const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path, std::string_view magic, std::uint32_t version);

}  // namespace comrl::nd
