#include "fedseg/model/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "fedseg/error.hpp"

namespace fedseg::model {

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    value |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(c)) << (8 * i));
  }
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write("FPWT", 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("tensor name too long: " + t.name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    const auto& shape = t.value.shape();
    put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (std::size_t e : shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    for (double v : t.value.data()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw Error("failed writing checkpoint");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string_view(magic, 4) != "FPWT") throw FormatError("not an FPWT checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported FPWT version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, "tensor count");
  std::vector<NamedTensor> tensors;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = get<std::uint16_t>(in, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (in.gcount() != name_len) throw FormatError("checkpoint truncated in tensor name");
    const auto rank = get<std::uint8_t>(in, "rank");
    numerics::Shape shape(rank);
    for (auto& e : shape) {
      e = get<std::uint32_t>(in, "extent");
      if (e == 0) throw FormatError("tensor " + name + " has a zero extent");
    }
    std::vector<double> values(numerics::shape_numel(shape));
    for (double& v : values) v = std::bit_cast<double>(get<std::uint64_t>(in, "tensor data"));
    tensors.push_back({std::move(name), numerics::Tensor(std::move(shape), std::move(values))});
  }
  return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  std::vector<NamedTensor> tensors(params.begin(), params.end());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, tensors);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

void apply_checkpoint(AttentionUNet& model, const std::vector<NamedTensor>& tensors) {
  auto& params = model.parameters();
  for (std::size_t i = 0; i < std::max(params.size(), tensors.size()); ++i) {
    if (i >= tensors.size()) throw FormatError("checkpoint is missing tensor " + params[i].name);
    if (i >= params.size()) throw FormatError("checkpoint has unexpected tensor " + tensors[i].name);
    if (tensors[i].name != params[i].name) {
      throw FormatError("checkpoint tensor " + tensors[i].name + " does not match model tensor " + params[i].name);
    }
    if (tensors[i].value.shape() != params[i].value.shape()) {
      throw FormatError("checkpoint tensor " + tensors[i].name + " has shape " +
                        numerics::shape_string(tensors[i].value.shape()) + ", model expects " +
                        numerics::shape_string(params[i].value.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto src = tensors[i].value.data();
    std::copy(src.begin(), src.end(), params[i].value.mutable_data().begin());
  }
}

}  // namespace fedseg::model
