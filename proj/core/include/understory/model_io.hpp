#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "understory/corrector_net.hpp"

namespace understory {

/// Model file: magic "DFRM", u16 version, endianness tag, flags, patch dims,
/// channel schedule, hidden widths, id, little-endian float32 parameters in
/// layout order, trailing CRC-32.
std::vector<std::uint8_t> serialize(const LayerModel<float>& model);
LayerModel<float> deserialize(const std::vector<std::uint8_t>& bytes);

void save_model(const std::string& path, const LayerModel<float>& model);
LayerModel<float> load_model(const std::string& path);

}  // namespace understory
