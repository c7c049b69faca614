#include "hjbppo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hjbppo::io {

namespace {
template <typename T>
void append_raw(std::vector<std::uint8_t>& buf, T v) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint format assumes little-endian host");
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.insert(buf.end(), raw, raw + sizeof(T));
}
}  // namespace

void BinaryWriter::u32(std::uint32_t v) { append_raw(buf_, v); }
void BinaryWriter::u64(std::uint64_t v) { append_raw(buf_, v); }
void BinaryWriter::i32(std::int32_t v) { append_raw(buf_, v); }
void BinaryWriter::f64(double v) { append_raw(buf_, v); }

void BinaryWriter::str(const std::string& s) {
  u64(s.size());
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void BinaryWriter::f64_vec(const std::vector<double>& v) {
  u64(v.size());
  for (double x : v) f64(x);
}

void BinaryWriter::i32_vec(const std::vector<int>& v) {
  u64(v.size());
  for (int x : v) i32(x);
}

void BinaryWriter::u8_vec(const std::vector<std::uint8_t>& v) {
  u64(v.size());
  buf_.insert(buf_.end(), v.begin(), v.end());
}

void BinaryWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open checkpoint file for writing: " +
                             path.string());
  }
  out.write(reinterpret_cast<const char*>(buf_.data()),
            static_cast<std::streamsize>(buf_.size()));
  if (!out) {
    throw std::runtime_error("short write to checkpoint file: " + path.string());
  }
}

BinaryReader BinaryReader::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint file: " + path.string());
  }
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) {
    throw std::runtime_error("short read from checkpoint file: " + path.string());
  }
  return BinaryReader(std::move(bytes));
}

void BinaryReader::need(std::size_t n) const {
  if (pos_ + n > buf_.size()) {
    throw std::runtime_error("checkpoint blob truncated");
  }
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, buf_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::int32_t BinaryReader::i32() {
  need(4);
  std::int32_t v;
  std::memcpy(&v, buf_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

double BinaryReader::f64() {
  need(8);
  double v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::string BinaryReader::str() {
  const std::uint64_t n = u64();
  need(n);
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::vector<double> BinaryReader::f64_vec() {
  const std::uint64_t n = u64();
  std::vector<double> v(n);
  for (auto& x : v) x = f64();
  return v;
}

std::vector<int> BinaryReader::i32_vec() {
  const std::uint64_t n = u64();
  std::vector<int> v(n);
  for (auto& x : v) x = i32();
  return v;
}

std::vector<std::uint8_t> BinaryReader::u8_vec() {
  const std::uint64_t n = u64();
  need(n);
  std::vector<std::uint8_t> v(buf_.data() + pos_, buf_.data() + pos_ + n);
  pos_ += n;
  return v;
}

}  // namespace hjbppo::io
