#pragma once

#include <string>
#include <vector>

#include "rscl/tensor.hpp"

namespace rscl {

// Standard base64 (with padding) over the little-endian bytes of the doubles.
// Round-trips bit-exactly, including signed zeros and subnormals.
std::string base64_encode_doubles(const std::vector<double>& v);
std::vector<double> base64_decode_doubles(const std::string& s);

// Writes to <path>.tmp then renames, so readers never observe a torn file.
void atomic_write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace rscl
