#pragma once

// Binary checkpoint container; the byte layout is described in
// docs/checkpoint.md.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "xlfnd/common.hpp"
#include "xlfnd/model.hpp"

namespace xlfnd::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint layout assumes a little-endian host");

inline constexpr char kMagic[8] = {'X', 'L', 'F', 'N', 'D', 'C', 'K', '1'};

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) {
    return "float32";
  } else {
    static_assert(std::is_same_v<T, double>, "checkpoints hold float or double parameters");
    return "float64";
  }
}

template <typename T>
struct Checkpoint {
  model::ModelParams<T> params;
  model::HyperConfig hyper;
  std::uint64_t seed = 0;
  int epoch = 0;
  nlohmann::json config;  // free-form echo of the run configuration
};

namespace detail {

template <typename T>
const model::ParamSet<T>& module(const model::ModelParams<T>& p, const std::string& name) {
  if (name == "article") return p.article;
  if (name == "source") return p.source;
  if (name == "detector") return p.detector;
  if (name == "critic") return p.critic;
  throw ContractError("checkpoint: unknown module '" + name + "'");
}

template <typename T>
model::ParamSet<T>& module(model::ModelParams<T>& p, const std::string& name) {
  return const_cast<model::ParamSet<T>&>(module(std::as_const(p), name));
}

inline constexpr const char* kModules[] = {"article", "source", "detector", "critic"};

}  // namespace detail

template <typename T>
void save(std::ostream& out, const Checkpoint<T>& ck) {
  nlohmann::ordered_json header;
  header["format"] = 1;
  header["dtype"] = dtype_name<T>();
  header["seed"] = ck.seed;
  header["epoch"] = ck.epoch;
  header["hyper"] = nlohmann::json(ck.hyper);
  header["config"] = ck.config;
  auto blocks = nlohmann::ordered_json::array();
  for (const char* m : detail::kModules) {
    for (const auto& [name, mat] : detail::module(ck.params, m).blocks) {
      blocks.push_back({{"module", m}, {"name", name}, {"rows", mat.rows()}, {"cols", mat.cols()}});
    }
  }
  header["blocks"] = blocks;
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const char* m : detail::kModules) {
    for (const auto& [_, mat] : detail::module(ck.params, m).blocks) {
      out.write(reinterpret_cast<const char*>(mat.data()), static_cast<std::streamsize>(mat.size() * sizeof(T)));
    }
  }
  if (!out) throw IoError("checkpoint: write failed");
}

template <typename T>
void save(const std::string& path, const Checkpoint<T>& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  save(out, ck);
}

template <typename T>
Checkpoint<T> load(std::istream& in, const std::string& name = "<stream>") {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError(name + ": not a checkpoint (bad magic)");
  }
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1u << 30)) {
    throw IoError(name + ": truncated checkpoint header");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw IoError(name + ": truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(name + ": malformed checkpoint header: " + e.what());
  }
  if (header.value("format", 0) != 1) throw IoError(name + ": unsupported checkpoint format");
  if (header.value("dtype", std::string()) != dtype_name<T>()) {
    throw ContractError(name + ": checkpoint dtype " + header.value("dtype", std::string("?")) + " does not match " +
                        dtype_name<T>());
  }
  Checkpoint<T> ck;
  ck.seed = header.at("seed").get<std::uint64_t>();
  ck.epoch = header.at("epoch").get<int>();
  ck.hyper = header.at("hyper").get<model::HyperConfig>();
  ck.config = header.at("config");
  for (const auto& b : header.at("blocks")) {
    const auto rows = b.at("rows").get<Eigen::Index>(), cols = b.at("cols").get<Eigen::Index>();
    autodiff::Matrix<T> m(rows, cols);
    if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)))) {
      throw IoError(name + ": truncated parameter block " + b.at("name").get<std::string>());
    }
    detail::module(ck.params, b.at("module").get<std::string>()).blocks.emplace_back(b.at("name").get<std::string>(),
                                                                                      std::move(m));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(name + ": trailing bytes after parameters");
  return ck;
}

template <typename T>
Checkpoint<T> load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return load<T>(in, path);
}

}  // namespace xlfnd::checkpoint
