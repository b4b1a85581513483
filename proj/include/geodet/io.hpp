#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "geodet/errors.hpp"

namespace geodet {

/// Writes via a temporary file and rename so readers never see a partial file.
inline void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("cannot open " + tmp + " for writing");
    os << contents;
    if (!os) throw Error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path, "cannot open file");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace geodet
