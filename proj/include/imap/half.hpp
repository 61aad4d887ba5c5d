#pragma once

#include <cstdint>

namespace imap {

// IEEE 754 binary16 conversion. Encoding rounds to nearest, ties to even.
std::uint16_t float_to_half(float value);
float half_to_float(std::uint16_t bits);

}  // namespace imap
