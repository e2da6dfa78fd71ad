// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <stdexcept>
#include <string>

namespace ftseg {

/// Checkpoint/dataset/model disagreement (wrong channel count, spatial size
/// not divisible, mismatched parameter table, ...).
class IncompatibleError : public std::runtime_error {
 public:
  explicit IncompatibleError(const std::string& what) : std::runtime_error(what) {}
};

/// Training hit a non-finite loss; carries where.
class TrainAbortError : public std::runtime_error {
 public:
  TrainAbortError(const std::string& what, int epoch, int batch)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + ")"),
        epoch(epoch),
        batch(batch) {}
  int epoch;
  int batch;
};

}  // namespace ftseg
