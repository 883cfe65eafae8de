#include "swinvrnn/tensor_io.hpp"

#include "swinvrnn/binary_io.hpp"
#include "swinvrnn/errors.hpp"
#include "swinvrnn/key_value.hpp"

namespace swinvrnn {

namespace fs = std::filesystem;

std::string shape_text(torch::IntArrayRef sizes) {
  std::string out;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(sizes[i]);
  }
  return out;
}

std::vector<std::int64_t> parse_shape(const std::string& text) {
  std::vector<std::int64_t> out;
  if (text.empty()) return out;
  for (const auto& part : split_list(text, 'x')) out.push_back(std::stoll(part));
  return out;
}

void write_tensor(const fs::path& path, const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  write_f32_le(path, {c.data_ptr<float>(), static_cast<std::size_t>(c.numel())});
}

torch::Tensor read_tensor(const fs::path& path, const std::vector<std::int64_t>& shape) {
  auto values = read_f32_le(path);
  std::int64_t n = 1;
  for (auto s : shape) n *= s;
  if (static_cast<std::int64_t>(values.size()) != n) {
    throw IoError(path.string() + " holds " + std::to_string(values.size()) + " values, expected " + std::to_string(n));
  }
  return torch::from_blob(values.data(), shape, torch::kFloat32).clone();
}

}  // namespace swinvrnn
