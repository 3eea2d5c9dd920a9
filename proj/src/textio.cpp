#include "graphcorr/textio.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "graphcorr/error.hpp"

namespace graphcorr {

std::string read_text_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, std::string("cannot open ") + what + " '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  // snprintf honours LC_NUMERIC; normalize a foreign decimal separator.
  for (char& c : buf) {
    if (c == ',') c = '.';
  }
  return buf;
}

}  // namespace graphcorr
