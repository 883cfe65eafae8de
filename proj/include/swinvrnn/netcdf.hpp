#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace swinvrnn {

// Read-only access to NetCDF files. Classic (CDF-1/2/5) files are parsed
// directly; NetCDF-4 files go through the HDF5 library. Values are unpacked
// with `scale_factor`/`add_offset`, and fill values come back as NaN.
class NetcdfFile {
 public:
  struct Variable {
    std::string name;
    std::vector<std::string> dims;  // empty names for NetCDF-4 files
    std::vector<std::int64_t> shape;
  };

  class Backend;

  static NetcdfFile open(const std::filesystem::path& path);

  const std::filesystem::path& path() const { return path_; }
  const std::vector<Variable>& variables() const;
  const Variable* find(const std::string& name) const;
  const Variable& variable(const std::string& name) const;

  std::optional<std::string> text_attribute(const std::string& var, const std::string& attr) const;
  std::optional<double> numeric_attribute(const std::string& var, const std::string& attr) const;

  std::vector<double> read_all(const std::string& name) const;
  // All values at index `record` of the variable's first dimension.
  std::vector<float> read_record(const std::string& name, std::int64_t record) const;

 private:
  std::filesystem::path path_;
  std::shared_ptr<Backend> impl_;

  std::vector<double> unpack(const std::string& name, std::vector<double> raw) const;
};

}  // namespace swinvrnn
