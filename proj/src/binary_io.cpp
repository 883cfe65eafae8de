#include "swinvrnn/binary_io.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

namespace {

std::uint32_t bswap32(std::uint32_t v) {
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

void swap_floats(std::span<float> values) {
  for (auto& f : values) f = std::bit_cast<float>(bswap32(std::bit_cast<std::uint32_t>(f)));
}

}  // namespace

void write_f32_le(const std::filesystem::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    std::vector<float> copy(values.begin(), values.end());
    swap_floats(copy);
    out.write(reinterpret_cast<const char*>(copy.data()), static_cast<std::streamsize>(copy.size() * 4));
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<float> read_f32_le(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot read " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % 4 != 0) throw IoError(path.string() + ": size is not a multiple of 4 bytes");
  std::vector<float> out(bytes / 4);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("short read from " + path.string());
  if constexpr (std::endian::native != std::endian::little) swap_floats(out);
  return out;
}

std::shared_ptr<MappedFloats> MappedFloats::open(const std::filesystem::path& path) {
  std::shared_ptr<MappedFloats> m(new MappedFloats());
  if constexpr (std::endian::native != std::endian::little) {
    m->fallback_ = read_f32_le(path);
    m->data_ = m->fallback_.data();
    m->size_ = m->fallback_.size();
    return m;
  }
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) throw IoError("cannot open " + path.string());
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    throw IoError("cannot stat " + path.string());
  }
  m->bytes_ = static_cast<std::size_t>(st.st_size);
  if (m->bytes_ % 4 != 0) {
    ::close(fd);
    throw IoError(path.string() + ": size is not a multiple of 4 bytes");
  }
  if (m->bytes_ > 0) {
    m->base_ = ::mmap(nullptr, m->bytes_, PROT_READ, MAP_SHARED, fd, 0);
    if (m->base_ == MAP_FAILED) {
      m->base_ = nullptr;
      ::close(fd);
      throw IoError("cannot map " + path.string());
    }
    m->data_ = static_cast<const float*>(m->base_);
  }
  ::close(fd);
  m->size_ = m->bytes_ / 4;
  return m;
}

MappedFloats::~MappedFloats() {
  if (base_) ::munmap(base_, bytes_);
}

}  // namespace swinvrnn
