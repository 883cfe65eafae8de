#include "swinvrnn/netcdf.hpp"

#include <hdf5.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

class NetcdfFile::Backend {
 public:
  virtual ~Backend() = default;
  std::vector<Variable> variables;
  virtual std::optional<std::string> text_attribute(const std::string& var, const std::string& attr) const = 0;
  virtual std::optional<double> numeric_attribute(const std::string& var, const std::string& attr) const = 0;
  // Raw values converted to double; whole variable when `record` is empty.
  virtual std::vector<double> raw(const std::string& name, std::optional<std::int64_t> record) const = 0;
};

namespace {

using Variable = NetcdfFile::Variable;

// ---------------------------------------------------------------------------
// Classic format
// ---------------------------------------------------------------------------

enum NcType : std::int32_t {
  kByte = 1, kChar = 2, kShort = 3, kInt = 4, kFloat = 5, kDouble = 6,
  kUByte = 7, kUShort = 8, kUInt = 9, kInt64 = 10, kUInt64 = 11,
};

constexpr std::int32_t kTagDimension = 0x0A;
constexpr std::int32_t kTagVariable = 0x0B;
constexpr std::int32_t kTagAttribute = 0x0C;

std::size_t type_size(std::int32_t type) {
  switch (type) {
    case kByte: case kChar: case kUByte: return 1;
    case kShort: case kUShort: return 2;
    case kInt: case kFloat: case kUInt: return 4;
    case kDouble: case kInt64: case kUInt64: return 8;
    default: throw IoError("unknown NetCDF type code " + std::to_string(type));
  }
}

template <typename T>
T load_be(const unsigned char* p) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::little) std::reverse(bytes.begin(), bytes.end());
  T out;
  std::memcpy(&out, bytes.data(), sizeof(T));
  return out;
}

double decode_value(std::int32_t type, const unsigned char* p) {
  switch (type) {
    case kByte: return static_cast<double>(static_cast<std::int8_t>(*p));
    case kChar: case kUByte: return static_cast<double>(*p);
    case kShort: return load_be<std::int16_t>(p);
    case kUShort: return load_be<std::uint16_t>(p);
    case kInt: return load_be<std::int32_t>(p);
    case kUInt: return load_be<std::uint32_t>(p);
    case kFloat: return load_be<float>(p);
    case kDouble: return load_be<double>(p);
    case kInt64: return static_cast<double>(load_be<std::int64_t>(p));
    case kUInt64: return static_cast<double>(load_be<std::uint64_t>(p));
    default: throw IoError("unknown NetCDF type code " + std::to_string(type));
  }
}

struct ClassicAttribute {
  std::int32_t type;
  std::vector<unsigned char> bytes;
  std::int64_t count;
};

struct ClassicVariable {
  std::vector<std::int64_t> dim_ids;
  std::map<std::string, ClassicAttribute> attributes;
  std::int32_t type = 0;
  std::int64_t vsize = 0;
  std::int64_t begin = 0;
  bool record = false;
};

class HeaderReader {
 public:
  HeaderReader(std::ifstream& in, int version, const std::filesystem::path& path)
      : in_(in), version_(version), path_(path) {}

  std::int32_t i32() {
    unsigned char b[4];
    bytes(b, 4);
    return load_be<std::int32_t>(b);
  }
  std::int64_t i64() {
    unsigned char b[8];
    bytes(b, 8);
    return load_be<std::int64_t>(b);
  }
  // NON_NEG: 64-bit in CDF-5, 32-bit otherwise.
  std::int64_t count() { return version_ == 5 ? i64() : i32(); }
  std::int64_t offset() { return version_ == 1 ? i32() : i64(); }
  std::string name() {
    const auto n = count();
    std::string s(static_cast<std::size_t>(n), '\0');
    bytes(reinterpret_cast<unsigned char*>(s.data()), static_cast<std::size_t>(n));
    skip_pad(static_cast<std::size_t>(n));
    return s;
  }
  void bytes(unsigned char* dst, std::size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw IoError(path_.string() + ": truncated NetCDF header");
  }
  void skip_pad(std::size_t n) {
    const auto pad = (4 - n % 4) % 4;
    unsigned char b[4];
    if (pad) bytes(b, pad);
  }
  std::map<std::string, ClassicAttribute> attributes() {
    std::map<std::string, ClassicAttribute> out;
    const auto tag = i32();
    const auto n = count();
    if (tag == 0 && n == 0) return out;
    if (tag != kTagAttribute) throw IoError(path_.string() + ": malformed attribute list");
    for (std::int64_t a = 0; a < n; ++a) {
      auto key = name();
      ClassicAttribute attr;
      attr.type = i32();
      attr.count = count();
      const auto size = static_cast<std::size_t>(attr.count) * type_size(attr.type);
      attr.bytes.resize(size);
      bytes(attr.bytes.data(), size);
      skip_pad(size);
      out.emplace(std::move(key), std::move(attr));
    }
    return out;
  }

 private:
  std::ifstream& in_;
  int version_;
  const std::filesystem::path& path_;
};

class ClassicBackend final : public NetcdfFile::Backend {
 public:
  explicit ClassicBackend(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
    char magic[4];
    in_.read(magic, 4);
    if (!in_ || std::memcmp(magic, "CDF", 3) != 0) throw IoError(path.string() + ": not a classic NetCDF file");
    const int version = magic[3];
    if (version != 1 && version != 2 && version != 5) {
      throw IoError(path.string() + ": unsupported NetCDF version " + std::to_string(version));
    }
    HeaderReader hdr(in_, version, path_);
    numrecs_ = hdr.count();

    std::vector<std::string> dim_names;
    std::vector<std::int64_t> dim_lengths;
    {
      const auto tag = hdr.i32();
      const auto n = hdr.count();
      if (!(tag == 0 && n == 0)) {
        if (tag != kTagDimension) throw IoError(path.string() + ": malformed dimension list");
        for (std::int64_t d = 0; d < n; ++d) {
          dim_names.push_back(hdr.name());
          dim_lengths.push_back(hdr.count());
        }
      }
    }
    global_ = hdr.attributes();
    const auto tag = hdr.i32();
    const auto n_vars = hdr.count();
    if (!(tag == 0 && n_vars == 0) && tag != kTagVariable) throw IoError(path.string() + ": malformed variable list");
    std::int64_t record_vars = 0;
    for (std::int64_t v = 0; v < (tag == 0 ? 0 : n_vars); ++v) {
      Variable meta;
      ClassicVariable var;
      meta.name = hdr.name();
      const auto rank = hdr.count();
      for (std::int64_t r = 0; r < rank; ++r) var.dim_ids.push_back(hdr.count());
      var.attributes = hdr.attributes();
      var.type = hdr.i32();
      var.vsize = hdr.count();
      var.begin = hdr.offset();
      for (std::size_t r = 0; r < var.dim_ids.size(); ++r) {
        const auto id = static_cast<std::size_t>(var.dim_ids[r]);
        if (id >= dim_names.size()) throw IoError(path.string() + ": bad dimension id");
        meta.dims.push_back(dim_names[id]);
        std::int64_t len = dim_lengths[id];
        if (len == 0) {
          if (r != 0) throw IoError(path.string() + ": unlimited dimension must come first");
          var.record = true;
          len = numrecs_;
        }
        meta.shape.push_back(len);
      }
      if (var.record) {
        ++record_vars;
        record_size_ += var.vsize;
      }
      variables.push_back(std::move(meta));
      vars_.push_back(std::move(var));
    }
    if (record_vars == 1) {
      // A lone record variable is stored without inter-record padding.
      for (std::size_t v = 0; v < vars_.size(); ++v) {
        if (!vars_[v].record) continue;
        std::int64_t n = 1;
        for (std::size_t r = 1; r < variables[v].shape.size(); ++r) n *= variables[v].shape[r];
        record_size_ = n * static_cast<std::int64_t>(type_size(vars_[v].type));
      }
    }
  }

  std::optional<std::string> text_attribute(const std::string& var, const std::string& attr) const override {
    const auto* a = find_attr(var, attr);
    if (!a || a->type != kChar) return std::nullopt;
    std::string s(a->bytes.begin(), a->bytes.end());
    while (!s.empty() && s.back() == '\0') s.pop_back();
    return s;
  }

  std::optional<double> numeric_attribute(const std::string& var, const std::string& attr) const override {
    const auto* a = find_attr(var, attr);
    if (!a || a->type == kChar || a->count < 1) return std::nullopt;
    return decode_value(a->type, a->bytes.data());
  }

  std::vector<double> raw(const std::string& name, std::optional<std::int64_t> record) const override {
    const auto idx = index_of(name);
    const auto& meta = variables[idx];
    const auto& var = vars_[idx];
    const auto tsize = static_cast<std::int64_t>(type_size(var.type));
    std::int64_t inner = 1;
    for (std::size_t r = var.record ? 1 : 0; r < meta.shape.size(); ++r) inner *= meta.shape[r];
    std::vector<double> out;
    auto read_block = [&](std::int64_t offset, std::int64_t n) {
      std::vector<unsigned char> buf(static_cast<std::size_t>(n * tsize));
      in_.clear();
      in_.seekg(offset);
      in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
      if (!in_) throw IoError(path_.string() + ": truncated data for '" + name + "'");
      for (std::int64_t i = 0; i < n; ++i) out.push_back(decode_value(var.type, buf.data() + i * tsize));
    };
    if (var.record) {
      const std::int64_t first = record.value_or(0);
      const std::int64_t last = record ? first + 1 : numrecs_;
      if (first < 0 || last > numrecs_) throw IoError(path_.string() + ": record index out of range");
      out.reserve(static_cast<std::size_t>((last - first) * inner));
      for (std::int64_t r = first; r < last; ++r) read_block(var.begin + r * record_size_, inner);
    } else if (record) {
      if (meta.shape.empty()) throw IoError(path_.string() + ": scalar variable '" + name + "' has no records");
      const auto per = inner / meta.shape[0];
      if (*record < 0 || *record >= meta.shape[0]) throw IoError(path_.string() + ": record index out of range");
      read_block(var.begin + *record * per * tsize, per);
    } else {
      read_block(var.begin, inner);
    }
    return out;
  }

 private:
  std::filesystem::path path_;
  mutable std::ifstream in_;
  std::int64_t numrecs_ = 0;
  std::int64_t record_size_ = 0;
  std::map<std::string, ClassicAttribute> global_;
  std::vector<ClassicVariable> vars_;

  std::size_t index_of(const std::string& name) const {
    for (std::size_t v = 0; v < variables.size(); ++v) {
      if (variables[v].name == name) return v;
    }
    throw IoError(path_.string() + ": no variable '" + name + "'");
  }

  const ClassicAttribute* find_attr(const std::string& var, const std::string& attr) const {
    const auto& map = var.empty() ? global_ : vars_[index_of(var)].attributes;
    auto it = map.find(attr);
    return it == map.end() ? nullptr : &it->second;
  }
};

// ---------------------------------------------------------------------------
// NetCDF-4 (HDF5)
// ---------------------------------------------------------------------------

class H5Handle {
 public:
  H5Handle(hid_t id, herr_t (*close)(hid_t)) : id_(id), close_(close) {}
  H5Handle(const H5Handle&) = delete;
  H5Handle& operator=(const H5Handle&) = delete;
  ~H5Handle() {
    if (id_ >= 0) close_(id_);
  }
  hid_t get() const { return id_; }
  bool valid() const { return id_ >= 0; }

 private:
  hid_t id_;
  herr_t (*close_)(hid_t);
};

class Hdf5Backend final : public NetcdfFile::Backend {
 public:
  explicit Hdf5Backend(const std::filesystem::path& path)
      : path_(path), file_(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose) {
    if (!file_.valid()) throw IoError("cannot open HDF5 file " + path.string());
    H5Literate(file_.get(), H5_INDEX_NAME, H5_ITER_NATIVE, nullptr, &Hdf5Backend::collect, this);
  }

  std::optional<std::string> text_attribute(const std::string& var, const std::string& attr) const override {
    const char* obj = var.empty() ? "/" : var.c_str();
    if (H5Aexists_by_name(file_.get(), obj, attr.c_str(), H5P_DEFAULT) <= 0) return std::nullopt;
    H5Handle a(H5Aopen_by_name(file_.get(), obj, attr.c_str(), H5P_DEFAULT, H5P_DEFAULT), H5Aclose);
    H5Handle type(H5Aget_type(a.get()), H5Tclose);
    if (H5Tget_class(type.get()) != H5T_STRING) return std::nullopt;
    if (H5Tis_variable_str(type.get()) > 0) {
      H5Handle mem(H5Tcopy(H5T_C_S1), H5Tclose);
      H5Tset_size(mem.get(), H5T_VARIABLE);
      char* value = nullptr;
      if (H5Aread(a.get(), mem.get(), &value) < 0 || value == nullptr) return std::nullopt;
      std::string s(value);
      H5free_memory(value);
      return s;
    }
    const auto size = H5Tget_size(type.get());
    std::string s(size, '\0');
    if (H5Aread(a.get(), type.get(), s.data()) < 0) return std::nullopt;
    while (!s.empty() && s.back() == '\0') s.pop_back();
    return s;
  }

  std::optional<double> numeric_attribute(const std::string& var, const std::string& attr) const override {
    const char* obj = var.empty() ? "/" : var.c_str();
    if (H5Aexists_by_name(file_.get(), obj, attr.c_str(), H5P_DEFAULT) <= 0) return std::nullopt;
    H5Handle a(H5Aopen_by_name(file_.get(), obj, attr.c_str(), H5P_DEFAULT, H5P_DEFAULT), H5Aclose);
    H5Handle type(H5Aget_type(a.get()), H5Tclose);
    const auto cls = H5Tget_class(type.get());
    if (cls != H5T_INTEGER && cls != H5T_FLOAT) return std::nullopt;
    H5Handle space(H5Aget_space(a.get()), H5Sclose);
    const auto n = H5Sget_simple_extent_npoints(space.get());
    if (n < 1) return std::nullopt;
    std::vector<double> values(static_cast<std::size_t>(n));
    if (H5Aread(a.get(), H5T_NATIVE_DOUBLE, values.data()) < 0) return std::nullopt;
    return values.front();
  }

  std::vector<double> raw(const std::string& name, std::optional<std::int64_t> record) const override {
    H5Handle ds(H5Dopen2(file_.get(), name.c_str(), H5P_DEFAULT), H5Dclose);
    if (!ds.valid()) throw IoError(path_.string() + ": no variable '" + name + "'");
    H5Handle space(H5Dget_space(ds.get()), H5Sclose);
    const int rank = H5Sget_simple_extent_ndims(space.get());
    std::vector<hsize_t> dims(static_cast<std::size_t>(std::max(rank, 0)));
    H5Sget_simple_extent_dims(space.get(), dims.data(), nullptr);
    if (!record) {
      std::vector<double> out(static_cast<std::size_t>(H5Sget_simple_extent_npoints(space.get())));
      if (!out.empty() && H5Dread(ds.get(), H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, out.data()) < 0) {
        throw IoError(path_.string() + ": failed reading '" + name + "'");
      }
      return out;
    }
    if (rank < 1 || *record < 0 || static_cast<hsize_t>(*record) >= dims[0]) {
      throw IoError(path_.string() + ": record index out of range for '" + name + "'");
    }
    std::vector<hsize_t> start(dims.size(), 0);
    std::vector<hsize_t> count = dims;
    start[0] = static_cast<hsize_t>(*record);
    count[0] = 1;
    H5Sselect_hyperslab(space.get(), H5S_SELECT_SET, start.data(), nullptr, count.data(), nullptr);
    hsize_t n = 1;
    for (std::size_t r = 1; r < dims.size(); ++r) n *= dims[r];
    H5Handle mem(H5Screate_simple(1, &n, nullptr), H5Sclose);
    std::vector<double> out(static_cast<std::size_t>(n));
    if (H5Dread(ds.get(), H5T_NATIVE_DOUBLE, mem.get(), space.get(), H5P_DEFAULT, out.data()) < 0) {
      throw IoError(path_.string() + ": failed reading '" + name + "'");
    }
    return out;
  }

 private:
  std::filesystem::path path_;
  H5Handle file_;

  static herr_t collect(hid_t group, const char* name, const H5L_info_t*, void* self_ptr) {
    auto* self = static_cast<Hdf5Backend*>(self_ptr);
    H5O_info_t info;
    if (H5Oget_info_by_name2(group, name, &info, H5O_INFO_BASIC, H5P_DEFAULT) < 0) return 0;
    if (info.type != H5O_TYPE_DATASET) return 0;
    H5Handle ds(H5Dopen2(group, name, H5P_DEFAULT), H5Dclose);
    H5Handle space(H5Dget_space(ds.get()), H5Sclose);
    const int rank = H5Sget_simple_extent_ndims(space.get());
    std::vector<hsize_t> dims(static_cast<std::size_t>(std::max(rank, 0)));
    H5Sget_simple_extent_dims(space.get(), dims.data(), nullptr);
    Variable v;
    v.name = name;
    for (auto d : dims) {
      v.shape.push_back(static_cast<std::int64_t>(d));
      v.dims.emplace_back();
    }
    self->variables.push_back(std::move(v));
    return 0;
  }
};

}  // namespace

NetcdfFile NetcdfFile::open(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open " + path.string());
  char magic[8] = {};
  probe.read(magic, 8);
  probe.close();
  NetcdfFile f;
  f.path_ = path;
  if (std::memcmp(magic, "CDF", 3) == 0) {
    f.impl_ = std::make_shared<ClassicBackend>(path);
  } else if (std::memcmp(magic, "\x89HDF\r\n\x1a\n", 8) == 0) {
    static const bool silenced = [] {
      H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
      return true;
    }();
    (void)silenced;
    f.impl_ = std::make_shared<Hdf5Backend>(path);
  } else {
    throw IoError(path.string() + ": neither classic NetCDF nor NetCDF-4/HDF5");
  }
  return f;
}

const std::vector<NetcdfFile::Variable>& NetcdfFile::variables() const { return impl_->variables; }

const NetcdfFile::Variable* NetcdfFile::find(const std::string& name) const {
  for (const auto& v : impl_->variables) {
    if (v.name == name) return &v;
  }
  return nullptr;
}

const NetcdfFile::Variable& NetcdfFile::variable(const std::string& name) const {
  if (const auto* v = find(name)) return *v;
  throw CatalogMismatch(path_.string() + ": missing variable '" + name + "'");
}

std::optional<std::string> NetcdfFile::text_attribute(const std::string& var, const std::string& attr) const {
  return impl_->text_attribute(var, attr);
}

std::optional<double> NetcdfFile::numeric_attribute(const std::string& var, const std::string& attr) const {
  return impl_->numeric_attribute(var, attr);
}

std::vector<double> NetcdfFile::unpack(const std::string& name, std::vector<double> raw) const {
  const auto fill = numeric_attribute(name, "_FillValue");
  const auto missing = numeric_attribute(name, "missing_value");
  const double scale = numeric_attribute(name, "scale_factor").value_or(1.0);
  const double offset = numeric_attribute(name, "add_offset").value_or(0.0);
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  for (auto& v : raw) {
    if ((fill && v == *fill) || (missing && v == *missing)) {
      v = nan;
    } else {
      v = v * scale + offset;
    }
  }
  return raw;
}

std::vector<double> NetcdfFile::read_all(const std::string& name) const {
  variable(name);
  return unpack(name, impl_->raw(name, std::nullopt));
}

std::vector<float> NetcdfFile::read_record(const std::string& name, std::int64_t record) const {
  variable(name);
  const auto values = unpack(name, impl_->raw(name, record));
  return {values.begin(), values.end()};
}

}  // namespace swinvrnn
