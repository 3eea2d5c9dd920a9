#pragma once

#include <string>

namespace graphcorr {

// Whole file as bytes; throws Error(Io) naming `what` and the path.
std::string read_text_file(const std::string& path, const char* what);

// 12 significant digits, '.' decimal regardless of locale.
std::string format_number(double v);

}  // namespace graphcorr
