#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hjbppo::io {

// Little-endian binary encoder for checkpoint blobs. Doubles are stored as
// raw IEEE-754 bits so round-trips are bit-exact.
class BinaryWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v);
  void f64(double v);
  void str(const std::string& s);
  void f64_vec(const std::vector<double>& v);
  void i32_vec(const std::vector<int>& v);
  void u8_vec(const std::vector<std::uint8_t>& v);

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::vector<std::uint8_t> bytes)
      : buf_(std::move(bytes)) {}
  static BinaryReader load(const std::filesystem::path& path);

  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32();
  double f64();
  std::string str();
  std::vector<double> f64_vec();
  std::vector<int> i32_vec();
  std::vector<std::uint8_t> u8_vec();

  bool exhausted() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const;
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace hjbppo::io
