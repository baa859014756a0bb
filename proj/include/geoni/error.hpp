// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace geoni {

// Base error for contract violations and malformed inputs.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Raised when training hits a non-finite loss. Carries the path of the most
// recent intact checkpoint so callers can report it.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::string last_good)
      : Error(what), last_good_checkpoint(std::move(last_good)) {}
  std::string last_good_checkpoint;
};

#define GEONI_REQUIRE(cond, msg)            \
  do {                                      \
    if (!(cond)) throw ::geoni::Error(msg); \
  } while (0)

}  // namespace geoni
