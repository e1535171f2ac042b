#include "cref/core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <type_traits>

namespace cref {
namespace {

constexpr char kMagic[8] = {'C', 'R', 'E', 'F', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(std::string_view bytes, std::size_t offset) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    value |= static_cast<U>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return value;
}

using RealBits = std::conditional_t<sizeof(real) == 8, std::uint64_t, std::uint32_t>;

[[noreturn]] void corrupt(const std::string& why) {
  throw std::runtime_error("checkpoint: " + why);
}

}  // namespace

const CheckpointEntry* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["dtype"] = kDoublePrecision ? "f64" : "f32";
  header["metadata"] = ckpt.metadata;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : ckpt.tensors) {
    if (element_count(t.shape) != t.values.size())
      corrupt("tensor '" + t.name + "' has " + std::to_string(t.values.size()) +
              " values for shape " + shape_string(t.shape));
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  }
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& t : ckpt.tensors)
    for (real v : t.values) put_le(out, std::bit_cast<RealBits>(v));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    corrupt("bad magic");
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointFormatVersion)
    corrupt("unsupported format version " + std::to_string(version));
  const auto hlen = get_le<std::uint64_t>(bytes, 12);
  if (20 + hlen > bytes.size()) corrupt("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, hlen));
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("header is not JSON: ") + e.what());
  }
  const std::string dtype = header.at("dtype").get<std::string>();
  const std::size_t width = dtype == "f64" ? 8 : dtype == "f32" ? 4 : 0;
  if (width == 0) corrupt("unknown dtype " + dtype);

  Checkpoint ckpt;
  ckpt.metadata = header.value("metadata", nlohmann::json::object());
  std::size_t offset = 20 + hlen;
  for (const auto& entry : header.at("tensors")) {
    CheckpointEntry t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<Shape>();
    const std::size_t n = element_count(t.shape);
    if (offset + n * width > bytes.size()) corrupt("truncated data for '" + t.name + "'");
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i, offset += width) {
      if (width == 8) t.values[i] = static_cast<real>(std::bit_cast<double>(get_le<std::uint64_t>(bytes, offset)));
      else t.values[i] = static_cast<real>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, offset)));
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (offset != bytes.size()) corrupt("trailing bytes after tensor data");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint snapshot_parameters(const ParameterList& params, nlohmann::json metadata) {
  Checkpoint ckpt;
  ckpt.metadata = metadata.is_null() ? nlohmann::json::object() : std::move(metadata);
  for (const auto& p : params)
    ckpt.tensors.push_back(
        {p.name, p.tensor.shape(), std::vector<real>(p.tensor.values().begin(), p.tensor.values().end())});
  return ckpt;
}

void restore_parameters(const Checkpoint& ckpt, const ParameterList& params) {
  for (const auto& p : params) {
    const CheckpointEntry* e = ckpt.find(p.name);
    if (!e) throw std::runtime_error("checkpoint is missing parameter '" + p.name + "'");
    if (e->shape != p.tensor.shape())
      throw ShapeError("checkpoint parameter '" + p.name + "' has shape " + shape_string(e->shape) +
                       ", model expects " + shape_string(p.tensor.shape()));
    Tensor t = p.tensor;
    auto dst = t.mutable_values();
    std::copy(e->values.begin(), e->values.end(), dst.begin());
  }
}

}  // namespace cref
