#include "frontdoor/checkpoint.hpp"

#include "frontdoor/errors.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace frontdoor {

namespace {

constexpr std::array<char, 4> kMagic{'F', 'D', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}

bool get_u64(std::istream& in, std::uint64_t& v) {
  std::array<unsigned char, 8> b;
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return true;
}

std::uint64_t require_u64(std::istream& in, const char* what) {
  std::uint64_t v;
  if (!get_u64(in, v)) throw IoError(std::string("checkpoint: truncated ") + what);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic.data(), kMagic.size());
  for (const auto& [name, t] : tensors) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, t.shape().size());
    for (Index e : t.shape()) put_u64(out, static_cast<std::uint64_t>(e));
    for (Index i = 0; i < t.numel(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(t.data()[i]));
  }
  if (!out) throw IoError("checkpoint: write failed");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kMagic) throw IoError("checkpoint: bad magic (expected FDT1)");
  std::vector<NamedTensor> out;
  std::uint64_t name_len;
  while (get_u64(in, name_len)) {
    if (name_len > (1u << 20)) throw IoError("checkpoint: implausible name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name_len))) throw IoError("checkpoint: truncated name");
    const auto rank = require_u64(in, "rank");
    if (rank > 16) throw IoError("checkpoint: implausible rank");
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(static_cast<Index>(require_u64(in, "extent")));
    Array values(shape_numel(shape));
    for (Index i = 0; i < values.size(); ++i) values[i] = std::bit_cast<double>(require_u64(in, "data"));
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(out, tensors);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

void assign_from(const std::vector<NamedTensor>& records, const std::vector<NamedTensor>& params) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : records) by_name[name] = &t;
  for (const auto& [name, p] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("checkpoint: missing tensor " + name);
    if (it->second->shape() != p.shape()) {
      throw DimensionError("checkpoint: tensor " + name + " has shape " + shape_string(it->second->shape()) +
                           ", expected " + shape_string(p.shape()));
    }
    Tensor dst = p;
    dst.mutable_data() = it->second->data();
  }
}

}  // namespace frontdoor
