#pragma once

// Checkpoint container:
//
//   MODMO-CKPT 1\n
//   header_bytes=<n>\n
//   <n bytes of JSON>\n
//   <float64 little-endian arrays, row-major, in header order>
//
// Header JSON: {"meta": {...}, "arrays": [{"name", "rows", "cols"}, ...]}.
// Loading a model checks every name and shape against the model it fills.

#include <bit>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "modmo/common.hpp"

namespace modmo {

inline constexpr const char* kCheckpointMagic = "MODMO-CKPT 1";

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, MatD>> arrays;

  const MatD* find(const std::string& name) const {
    for (const auto& [n, m] : arrays)
      if (n == name) return &m;
    return nullptr;
  }

  const MatD& at(const std::string& name) const {
    const MatD* m = find(name);
    require(m != nullptr, ErrorCode::ShapeMismatch, "checkpoint has no array '" + name + "'");
    return *m;
  }

  template <class T>
  void put(const std::string& name, const Mat<T>& m) {
    require(find(name) == nullptr, ErrorCode::InvalidArgument, "duplicate checkpoint array '" + name + "'");
    arrays.emplace_back(name, m.template cast<double>());
  }
};

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json head;
  head["meta"] = ck.meta;
  head["arrays"] = nlohmann::json::array();
  for (const auto& [n, m] : ck.arrays) head["arrays"].push_back({{"name", n}, {"rows", m.rows()}, {"cols", m.cols()}});
  const std::string text = head.dump();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot open " + path + " for writing");
  out << kCheckpointMagic << '\n' << "header_bytes=" << text.size() << '\n' << text << '\n';
  static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");
  for (const auto& [n, m] : ck.arrays)
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  require(out.good(), ErrorCode::Io, "write failed for " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open " + path);
  std::string line;
  std::getline(in, line);
  require(line == kCheckpointMagic, ErrorCode::Format, path + ": not a checkpoint");
  std::getline(in, line);
  require(line.rfind("header_bytes=", 0) == 0, ErrorCode::Format, path + ": missing header size");
  std::size_t n = 0;
  try {
    n = std::stoul(line.substr(13));
  } catch (const std::exception&) {
    fail(ErrorCode::Format, path + ": bad header size");
  }
  std::string text(n, '\0');
  in.read(text.data(), static_cast<std::streamsize>(n));
  require(static_cast<std::size_t>(in.gcount()) == n && in.get() == '\n', ErrorCode::Format, path + ": truncated header");
  Checkpoint ck;
  try {
    const auto head = nlohmann::json::parse(text);
    ck.meta = head.at("meta");
    for (const auto& a : head.at("arrays")) {
      const auto rows = a.at("rows").get<Eigen::Index>(), cols = a.at("cols").get<Eigen::Index>();
      require(rows >= 0 && cols >= 0, ErrorCode::Format, path + ": negative shape");
      MatD m(rows, cols);
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
      require(static_cast<bool>(in), ErrorCode::Format, path + ": truncated array data");
      ck.arrays.emplace_back(a.at("name").get<std::string>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, path + ": " + e.what());
  }
  in.peek();
  require(in.eof(), ErrorCode::Format, path + ": trailing bytes");
  return ck;
}

// Parameter arrays of a model (anything with for_each(name, Mat&)).
template <class T, class Model>
void store_params(Checkpoint& ck, Model& m) {
  m.for_each([&](const std::string& name, Mat<T>& v) { ck.put(name, v); });
}

template <class T, class Model>
void load_params(const Checkpoint& ck, Model& m) {
  m.for_each([&](const std::string& name, Mat<T>& v) {
    const MatD& src = ck.at(name);
    require(src.rows() == v.rows() && src.cols() == v.cols(), ErrorCode::ShapeMismatch,
            "array '" + name + "' is " + std::to_string(src.rows()) + "x" + std::to_string(src.cols()) + ", model expects " +
                std::to_string(v.rows()) + "x" + std::to_string(v.cols()));
    v = src.template cast<T>();
  });
}

// Hash of a model's parameter bytes, used to tie a branch to its base model.
template <class T, class Model>
std::uint64_t param_hash(Model& m) {
  std::uint64_t h = 0;
  m.for_each([&](const std::string& name, Mat<T>& v) {
    h = fnv1a(name, h);
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(v.data()), sizeof(T) * static_cast<std::size_t>(v.size())), h);
  });
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace modmo
