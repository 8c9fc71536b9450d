#include "modnet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace modnet {

namespace {

constexpr char kMagic[4] = {'M', 'O', 'D', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ofstream& out, T v) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bytes[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw std::runtime_error("truncated checkpoint file");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return static_cast<T>(v);
}

void write_f64(std::ofstream& out, const double* data, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &data[i], sizeof(bits));
    write_le<std::uint64_t>(out, bits);
  }
}

void read_f64(std::ifstream& in, double* data, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t bits = read_le<std::uint64_t>(in);
    std::memcpy(&data[i], &bits, sizeof(bits));
  }
}

std::string describe(const std::string& name, const std::vector<int>& dims) {
  std::ostringstream os;
  os << name << ad::shape_str(dims);
  return os.str();
}

}  // namespace

void save_checkpoint(const std::string& path, ModNetParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint64_t>(out, params.config().digest());

  const auto tensors = params.state_tensors();
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(tensor->rank()));
    for (int d : tensor->shape) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    write_f64(out, tensor->data.data(), static_cast<std::size_t>(tensor->numel()));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

void load_checkpoint(const std::string& path, ModNetParams& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path + ": not a checkpoint file (bad magic)");
  const auto version = read_le<std::uint32_t>(in);
  if (version != kVersion)
    throw std::runtime_error(path + ": format version " + std::to_string(version) +
                             ", this build reads version " + std::to_string(kVersion));
  const auto digest = read_le<std::uint64_t>(in);
  const auto count = read_le<std::uint32_t>(in);

  // Stage everything first so a truncated or mismatched file leaves the
  // parameters untouched.
  std::vector<std::pair<std::string, ad::Tensor>> staged;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_le<std::uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("truncated checkpoint file");
    const auto rank = read_le<std::uint8_t>(in);
    std::vector<int> dims(rank);
    for (auto& d : dims) d = static_cast<int>(read_le<std::uint32_t>(in));
    ad::Tensor t = ad::Tensor::zeros(dims);
    read_f64(in, t.data.data(), static_cast<std::size_t>(t.numel()));
    staged.emplace_back(std::move(name), std::move(t));
  }

  const auto tensors = params.state_tensors();
  if (digest != params.config().digest() || staged.size() != tensors.size()) {
    std::ostringstream os;
    os << path << ": checkpoint does not match the configured model.\n  configured: "
       << params.config().dimension_table() << "\n  checkpoint tensors:";
    for (const auto& [name, t] : staged) os << ' ' << describe(name, t.shape);
    throw std::runtime_error(os.str());
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& [name, dst] = tensors[i];
    const auto& [file_name, src] = staged[i];
    if (file_name != name || src.shape != dst->shape) {
      std::ostringstream os;
      os << path << ": tensor mismatch at slot " << i << "\n  expected " << describe(name, dst->shape)
         << " (" << params.config().dimension_table() << ")\n  found    "
         << describe(file_name, src.shape);
      throw std::runtime_error(os.str());
    }
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i].second->data = staged[i].second.data;
}

}  // namespace modnet
