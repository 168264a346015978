#pragma once

#include <stdexcept>

namespace mate {

/// Malformed or unreadable input data (feature files, n-best lists, vocabularies).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mate
