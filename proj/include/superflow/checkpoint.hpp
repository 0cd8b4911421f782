#pragma once

// Plain-text parameter checkpoint.
//
//   superflow-checkpoint 1
//   dim <n>
//   time_freqs <n>
//   embed_dim <n>
//   prompts <n>
//   hidden <w1> <w2> ...
//   activation tanh|relu
//   <layer> <row> <col> <value>     one record per parameter
//
// Records: layer k >= 0 with row in [0, in) is weight W[row][col] of dense
// layer k; row == -1 is that layer's bias[col]; layer == -1 is the prompt
// embedding table (row = prompt, col = component). Values are C99 hex floats,
// so save/load round-trips bit-exactly.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "superflow/error.hpp"
#include "superflow/policy.hpp"

namespace superflow {

namespace detail {

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const PolicyParams& p) {
  const auto& s = p.shape;
  os << "superflow-checkpoint 1\n";
  os << "dim " << s.dim << "\n";
  os << "time_freqs " << s.time_freqs << "\n";
  os << "embed_dim " << s.embed_dim << "\n";
  os << "prompts " << s.prompts << "\n";
  os << "hidden";
  for (auto h : s.hidden) os << ' ' << h;
  os << "\n";
  os << "activation " << to_string(s.activation) << "\n";
  for (std::size_t k = 0; k < p.net.layers.size(); ++k) {
    const auto& l = p.net.layers[k];
    for (std::size_t r = 0; r < l.in; ++r) {
      for (std::size_t c = 0; c < l.out; ++c) {
        os << k << ' ' << r << ' ' << c << ' ' << detail::hexfloat(l.w(r, c)) << '\n';
      }
    }
    for (std::size_t c = 0; c < l.out; ++c) {
      os << k << " -1 " << c << ' ' << detail::hexfloat(l.bias[c]) << '\n';
    }
  }
  for (std::size_t r = 0; r < s.prompts; ++r) {
    for (std::size_t c = 0; c < s.embed_dim; ++c) {
      os << "-1 " << r << ' ' << c << ' ' << detail::hexfloat(p.embedding[r * s.embed_dim + c])
         << '\n';
    }
  }
}

inline PolicyParams read_checkpoint(std::istream& is) {
  auto fail = [](const std::string& msg) { return std::runtime_error("checkpoint: " + msg); };
  std::string line;
  if (!std::getline(is, line) || line != "superflow-checkpoint 1") throw fail("bad header");

  PolicyShape shape;
  shape.hidden.clear();
  auto read_field = [&](const char* name) {
    if (!std::getline(is, line)) throw fail(std::string("missing field ") + name);
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key != name) throw fail(std::string("expected ") + name + ", got '" + key + "'");
    return ls.str().substr(key.size());
  };
  shape.dim = std::stoul(read_field("dim"));
  shape.time_freqs = std::stoul(read_field("time_freqs"));
  shape.embed_dim = std::stoul(read_field("embed_dim"));
  shape.prompts = std::stoul(read_field("prompts"));
  {
    std::istringstream hs(read_field("hidden"));
    std::size_t h;
    while (hs >> h) shape.hidden.push_back(h);
  }
  {
    std::istringstream as(read_field("activation"));
    std::string a;
    as >> a;
    shape.activation = activation_from_string(a);
  }

  Rng unused(0);
  PolicyParams p = make_policy(shape, unused);
  p = zeros_like(p);
  const std::size_t expected = p.net.parameter_count() + p.embedding.size();
  std::size_t seen = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    long layer, row, col;
    std::string value;
    if (!(ls >> layer >> row >> col >> value)) throw fail("malformed record '" + line + "'");
    const double v = std::strtod(value.c_str(), nullptr);
    if (layer == -1) {
      if (row < 0 || static_cast<std::size_t>(row) >= shape.prompts || col < 0 ||
          static_cast<std::size_t>(col) >= shape.embed_dim) {
        throw fail("embedding record out of range: " + line);
      }
      p.embedding[static_cast<std::size_t>(row) * shape.embed_dim + static_cast<std::size_t>(col)] = v;
    } else {
      if (layer < 0 || static_cast<std::size_t>(layer) >= p.net.layers.size()) {
        throw fail("layer out of range: " + line);
      }
      auto& l = p.net.layers[static_cast<std::size_t>(layer)];
      if (col < 0 || static_cast<std::size_t>(col) >= l.out) throw fail("col out of range: " + line);
      if (row == -1) {
        l.bias[static_cast<std::size_t>(col)] = v;
      } else if (row >= 0 && static_cast<std::size_t>(row) < l.in) {
        l.w(static_cast<std::size_t>(row), static_cast<std::size_t>(col)) = v;
      } else {
        throw fail("row out of range: " + line);
      }
    }
    ++seen;
  }
  if (seen != expected) {
    throw fail("expected " + std::to_string(expected) + " records, read " + std::to_string(seen));
  }
  return p;
}

inline void save_checkpoint(const std::filesystem::path& path, const PolicyParams& p) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  write_checkpoint(os, p);
}

inline PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace superflow
