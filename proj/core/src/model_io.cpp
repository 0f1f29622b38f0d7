#include "understory/model_io.hpp"

#include "binary_util.hpp"

namespace understory {
namespace {
constexpr std::string_view kMagic = "DFRM";
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> serialize(const LayerModel<float>& model) {
  model.config.validate();
  require_input(model.params.size() == ParamLayout::of(model.config).total, "model parameters do not match config");
  bin::Writer w;
  w.tag(kMagic);
  w.u16(kVersion);
  w.u32(bin::kEndianTag);
  w.u8(model.identity ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(model.config.input.w));
  w.u32(static_cast<std::uint32_t>(model.config.input.h));
  w.u32(static_cast<std::uint32_t>(model.config.input.d));
  w.u32(static_cast<std::uint32_t>(model.config.channels.size()));
  for (int c : model.config.channels) w.u32(static_cast<std::uint32_t>(c));
  w.u32(static_cast<std::uint32_t>(model.config.hidden.size()));
  for (int h : model.config.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.str(model.id);
  w.u64(model.params.size());
  for (float p : model.params) w.f32(p);
  w.crc();
  return w.take();
}

LayerModel<float> deserialize(const std::vector<std::uint8_t>& bytes) {
  bin::Reader r(bytes, "model file");
  r.open(kMagic, kVersion);
  r.expect_endian_tag();
  LayerModel<float> m;
  m.identity = (r.u8() & 1) != 0;
  m.config.input.w = static_cast<int>(r.u32());
  m.config.input.h = static_cast<int>(r.u32());
  m.config.input.d = static_cast<int>(r.u32());
  const std::uint32_t n_conv = r.u32();
  require(n_conv == 8, ErrorKind::Format, "model file: expected 8 conv stages");
  m.config.channels.resize(n_conv);
  for (auto& c : m.config.channels) c = static_cast<int>(r.u32());
  const std::uint32_t n_hidden = r.u32();
  require(n_hidden <= 64, ErrorKind::Format, "model file: implausible hidden layer count");
  m.config.hidden.resize(n_hidden);
  for (auto& h : m.config.hidden) h = static_cast<int>(r.u32());
  m.id = r.str();
  const std::uint64_t n = r.u64();
  try {
    m.config.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Format, std::string("model file: ") + e.what());
  }
  require(n == ParamLayout::of(m.config).total, ErrorKind::Format, "model file: parameter count does not match config");
  require(r.remaining() == n * 4, ErrorKind::Format, "model file: payload length does not match parameter count");
  m.params.resize(n);
  for (auto& p : m.params) p = r.f32();
  return m;
}

void save_model(const std::string& path, const LayerModel<float>& model) { bin::write_file(path, serialize(model)); }

LayerModel<float> load_model(const std::string& path) { return deserialize(bin::read_file(path)); }

}  // namespace understory
