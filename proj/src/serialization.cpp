#include "auxetic/serialization.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "auxetic/errors.hpp"

namespace auxetic::serialization {

nlohmann::json design_to_json(const geometry::DesignParams& p) {
  return {{"lambda", p.lambda}, {"t", p.t}, {"A", p.A}};
}

geometry::DesignParams design_from_json(const nlohmann::json& j) {
  try {
    return {j.at("lambda").get<double>(), j.at("t").get<double>(), j.at("A").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, std::string("design record needs lambda, t, A: ") + e.what());
  }
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << contents;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

}  // namespace auxetic::serialization
