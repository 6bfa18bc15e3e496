#include "gsnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "gsnet/error.hpp"

namespace gsnet {

namespace {

static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559);

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamList& tensors) {
  std::vector<std::uint8_t> out{'G', 'S', 'N', 'C'};
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
    for (double v : t.data()) put_le<double>(out, v);
  }
  return out;
}

ParamList decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "GSNC", 4) != 0) throw IoError("not a GSNC checkpoint");
  Reader r(bytes);
  r.get_string(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  ParamList out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.get_string(name_len);
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(r.get<std::uint64_t>());
    std::vector<double> data(numel(shape));
    for (auto& v : data) v = r.get<double>();
    out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw IoError("trailing bytes after checkpoint payload");
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void save_checkpoint(const std::filesystem::path& path, const ParamList& tensors) {
  write_file_atomic(path, encode_checkpoint(tensors));
}

ParamList load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

void restore_parameters(ParamList& params, const ParamList& stored) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : stored) by_name.emplace(name, &t);
  for (auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("checkpoint is missing tensor '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw ConfigError("tensor '" + name + "' has shape " + shape_to_string(it->second->shape()) +
                        " in checkpoint but " + shape_to_string(t.shape()) + " in model");
    }
  }
  if (stored.size() != params.size()) {
    for (const auto& [name, t] : stored) {
      bool found = false;
      for (const auto& p : params) found = found || p.first == name;
      if (!found) throw ConfigError("checkpoint tensor '" + name + "' has no counterpart in model");
    }
  }
  for (auto& [name, t] : params) {
    auto src = by_name.at(name)->data();
    std::copy(src.begin(), src.end(), t.data().begin());
  }
}

}  // namespace gsnet
