#include "sketchlab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "sketchlab/dataio.hpp"

namespace sketchlab {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'L', 'B'};
constexpr uint32_t kVersion = 1;

// Explicit little-endian packing keeps the container portable regardless of
// host byte order.
void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  SK_THROW_IF(!is, TruncatedError, "container ends inside a length field");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  SK_THROW_IF(!is, TruncatedError, "container ends inside a length field");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

float f32_round(double v) { return static_cast<float>(v); }

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  SK_CHECK(os.good(), "cannot open " << path << " for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  std::string js = data.meta.dump();
  put_u64(os, js.size());
  os.write(js.data(), static_cast<std::streamsize>(js.size()));
  put_u32(os, static_cast<uint32_t>(data.tensors.size()));
  for (const auto& [name, t] : data.tensors) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<uint32_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d)
      put_u32(os, static_cast<uint32_t>(t.dim(d)));
    put_u64(os, static_cast<uint64_t>(t.size()));
    for (long i = 0; i < t.size(); ++i) {
      uint32_t bits = std::bit_cast<uint32_t>(f32_round(t[i]));
      put_u32(os, bits);
    }
  }
  os.flush();
  SK_CHECK(os.good(), "write to " << path << " failed");
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  SK_CHECK(is.good(), "cannot open " << path);
  char magic[4];
  is.read(magic, 4);
  SK_THROW_IF(!is || std::memcmp(magic, kMagic, 4) != 0, FormatError,
              path << " is not a model container");
  uint32_t version = get_u32(is);
  SK_THROW_IF(version != kVersion, FormatError,
              "unsupported container version " << version);
  uint64_t jlen = get_u64(is);
  std::string js(jlen, '\0');
  is.read(js.data(), static_cast<std::streamsize>(jlen));
  SK_THROW_IF(!is, TruncatedError, "container ends inside the header");
  CheckpointData data;
  try {
    data.meta = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container header is not valid JSON: ") +
                      e.what());
  }
  uint32_t count = get_u32(is);
  for (uint32_t k = 0; k < count; ++k) {
    uint32_t nlen = get_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    SK_THROW_IF(!is, TruncatedError, "container ends inside a tensor name");
    uint32_t rank = get_u32(is);
    SK_THROW_IF(rank > 8, FormatError, "implausible tensor rank " << rank);
    Shape shape(rank);
    long expect = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(get_u32(is));
      expect *= shape[d];
    }
    uint64_t n = get_u64(is);
    SK_THROW_IF(static_cast<long>(n) != expect, FormatError,
                "tensor " << name << " count " << n
                          << " disagrees with its shape");
    Tensor t(shape);
    for (uint64_t i = 0; i < n; ++i) {
      uint32_t bits = get_u32(is);
      t[static_cast<long>(i)] = std::bit_cast<float>(bits);
    }
    data.tensors.emplace_back(std::move(name), std::move(t));
  }
  return data;
}

void quantize_to_f32(Tensor& t) {
  for (long i = 0; i < t.size(); ++i)
    t[i] = static_cast<double>(f32_round(t[i]));
}

void add_store(CheckpointData& data, const std::string& prefix,
               const ParamStore& store) {
  for (const auto& [name, p] : store.params())
    data.add(prefix + name, p->value);
  for (const auto& [name, b] : store.buffers()) data.add(prefix + name, *b);
}

void load_store(const CheckpointData& data, const std::string& prefix,
                ParamStore& store) {
  auto fetch = [&](const std::string& name, Tensor& dst) {
    const Tensor* src = data.find(prefix + name);
    SK_CHECK(src, "container is missing tensor " << prefix + name);
    SK_THROW_IF(!src->same_shape(dst), DimensionError,
                "tensor " << prefix + name << " has shape "
                          << shape_str(src->shape()) << ", expected "
                          << shape_str(dst.shape()));
    dst = *src;
  };
  for (const auto& [name, p] : store.params()) fetch(name, p->value);
  for (const auto& [name, b] : store.buffers()) fetch(name, *b);
}

void quantize_store(ParamStore& store) {
  for (const auto& [name, p] : store.params()) quantize_to_f32(p->value);
  for (const auto& [name, b] : store.buffers()) quantize_to_f32(*b);
}

void add_adam(CheckpointData& data, const std::string& prefix,
              const Adam& opt) {
  data.meta[prefix + "step_count"] = opt.step_count();
  for (size_t i = 0; i < opt.size(); ++i) {
    data.add(prefix + "m" + std::to_string(i), opt.moment1(i));
    data.add(prefix + "v" + std::to_string(i), opt.moment2(i));
  }
}

void load_adam(const CheckpointData& data, const std::string& prefix,
               Adam& opt) {
  SK_CHECK(data.meta.contains(prefix + "step_count"),
           "container is missing optimizer state " << prefix);
  opt.set_step_count(data.meta[prefix + "step_count"].get<long>());
  auto fetch = [&](const std::string& name, Tensor& dst) {
    const Tensor* src = data.find(name);
    SK_CHECK(src, "container is missing tensor " << name);
    SK_THROW_IF(!src->same_shape(dst), DimensionError,
                "tensor " << name << " has shape " << shape_str(src->shape())
                          << ", expected " << shape_str(dst.shape()));
    dst = *src;
  };
  for (size_t i = 0; i < opt.size(); ++i) {
    fetch(prefix + "m" + std::to_string(i), opt.moment1(i));
    fetch(prefix + "v" + std::to_string(i), opt.moment2(i));
  }
}

void quantize_adam(Adam& opt) {
  for (size_t i = 0; i < opt.size(); ++i) {
    quantize_to_f32(opt.moment1(i));
    quantize_to_f32(opt.moment2(i));
  }
}

}  // namespace sketchlab
