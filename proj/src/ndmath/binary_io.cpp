#include "comrl/ndmath/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace comrl::nd {

std::string_view to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::io_error: return "io error";
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::version_mismatch: return "version mismatch";
    case FormatErrc::truncated: return "truncated";
    case FormatErrc::dim_mismatch: return "dim mismatch";
    case FormatErrc::bad_metadata: return "bad metadata";
  }
  return "unknown";
}

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void BinaryWriter::f64(double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

void BinaryWriter::raw(std::string_view bytes) { buf_.append(bytes); }

void BinaryWriter::blob(std::string_view bytes) {
  u32(static_cast<std::uint32_t>(bytes.size()));
  raw(bytes);
}

void BinaryWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::io_error, "cannot open " + path.string() + " for writing");
  out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw FormatError(FormatErrc::io_error, "write failed for " + path.string());
}

BinaryReader BinaryReader::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::io_error, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return BinaryReader(std::move(data));
}

void BinaryReader::need(std::size_t n) const {
  if (remaining() < n) {
    throw FormatError(FormatErrc::truncated, "need " + std::to_string(n) + " bytes, " +
                                                 std::to_string(remaining()) + " left");
  }
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
  pos_ += 4;
  return v;
}

double BinaryReader::f64() {
  need(8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
  pos_ += 8;
  return std::bit_cast<double>(bits);
}

std::string BinaryReader::raw(std::size_t n) {
  need(n);
  std::string out = buf_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string BinaryReader::blob() { return raw(u32()); }

void write_checkpoint(const std::filesystem::path& path, std::string_view magic, std::uint32_t version,
                      const Checkpoint& ckpt) {
  BinaryWriter w;
  w.raw(magic);
  w.u32(version);
  w.blob(ckpt.config_json);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const Tensor& t : ckpt.tensors) {
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    for (double v : t.values()) w.f64(v);
  }
  w.save(path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path, std::string_view magic, std::uint32_t version) {
  BinaryReader r = BinaryReader::load(path);
  if (r.remaining() < magic.size() || r.raw(magic.size()) != magic) {
    throw FormatError(FormatErrc::bad_magic, path.string());
  }
  const std::uint32_t v = r.u32();
  if (v != version) {
    throw FormatError(FormatErrc::version_mismatch,
                      "file version " + std::to_string(v) + ", expected " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_json = r.blob();
  const std::uint32_t n = r.u32();
  for (std::uint32_t k = 0; k < n; ++k) {
    const std::size_t rows = r.u32();
    const std::size_t cols = r.u32();
    Tensor t(rows, cols);
    for (double& x : t.values()) x = r.f64();
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatErrc::dim_mismatch, std::to_string(r.remaining()) + " trailing bytes");
  }
  return ckpt;
}

}  // namespace comrl::nd
