// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

// Checkpoint format: a text header (config as key=value lines, one `param
// <name> <dims...>` line per tensor, closed by `data`) followed by the raw
// little-endian 64-bit reals of every parameter in header order. Round-trips
// bit-exactly.

#include <bit>
#include <fstream>
#include <sstream>

#include "ftseg/errors.hpp"
#include "ftseg/model.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace ftseg {

namespace {
constexpr const char* kMagic = "ftseg-checkpoint v1";
}

void Model::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << kMagic << '\n';
  out << "variant = " << to_string(cfg_.variant) << '\n';
  out << "depth = " << cfg_.depth << '\n';
  out << "base_channels = " << cfg_.base_channels << '\n';
  out << "deep_supervision = " << (cfg_.deep_supervision ? 1 : 0) << '\n';
  out << "input_channels = " << cfg_.input_channels << '\n';
  out << "seed = " << cfg_.seed << '\n';
  for (const Parameter& p : params_) {
    out << "param " << p.name;
    for (int d : p.value.shape) out << ' ' << d;
    out << '\n';
  }
  out << "data\n";
  for (const Parameter& p : params_) {
    out.write(reinterpret_cast<const char*>(p.value.data.data()),
              static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("short write on checkpoint '" + path + "'");
}

Model Model::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw IncompatibleError("'" + path + "' is not a ftseg checkpoint");

  ModelConfig cfg;
  struct ParamDecl {
    std::string name;
    Shape shape;
  };
  std::vector<ParamDecl> decls;
  bool saw_data = false;
  while (std::getline(in, line)) {
    if (line == "data") {
      saw_data = true;
      break;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "param") {
      ParamDecl d;
      ls >> d.name;
      int dim;
      while (ls >> dim) d.shape.push_back(dim);
      if (d.name.empty() || d.shape.empty())
        throw IncompatibleError("malformed param line in '" + path + "': " + line);
      decls.push_back(std::move(d));
      continue;
    }
    std::string eq, value;
    ls >> eq >> value;
    if (eq != "=" || value.empty())
      throw IncompatibleError("malformed header line in '" + path + "': " + line);
    if (key == "variant")
      cfg.variant = variant_from_string(value);
    else if (key == "depth")
      cfg.depth = std::stoi(value);
    else if (key == "base_channels")
      cfg.base_channels = std::stoi(value);
    else if (key == "deep_supervision")
      cfg.deep_supervision = value != "0";
    else if (key == "input_channels")
      cfg.input_channels = std::stoi(value);
    else if (key == "seed")
      cfg.seed = std::stoull(value);
    else
      throw IncompatibleError("unknown checkpoint key '" + key + "' in '" + path + "'");
  }
  if (!saw_data) throw IncompatibleError("checkpoint '" + path + "' has no data section");

  Model m = Model::build(cfg);
  if (decls.size() != m.params_.size())
    throw IncompatibleError("checkpoint '" + path + "' lists " + std::to_string(decls.size()) +
                            " parameters, model built from its config has " +
                            std::to_string(m.params_.size()));
  for (size_t i = 0; i < decls.size(); ++i) {
    Parameter& p = m.params_[i];
    if (decls[i].name != p.name || decls[i].shape != p.value.shape)
      throw IncompatibleError("checkpoint parameter '" + decls[i].name + "' " +
                              shape_str(decls[i].shape) + " does not match model parameter '" +
                              p.name + "' " + shape_str(p.value.shape));
    in.read(reinterpret_cast<char*>(p.value.data.data()),
            static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
    if (!in)
      throw IncompatibleError("checkpoint '" + path + "' truncated while reading '" + p.name + "'");
  }
  return m;
}

}  // namespace ftseg
