#include "emplace/error.hpp"

namespace emplace {

int Error::exit_code() const noexcept {
  switch (kind_) {
    case ErrorKind::config:
      return 2;
    case ErrorKind::data:
      return 3;
    case ErrorKind::numerical:
      return 4;
  }
  return 1;
}

const char* Error::kind_name() const noexcept {
  switch (kind_) {
    case ErrorKind::config:
      return "config";
    case ErrorKind::data:
      return "data";
    case ErrorKind::numerical:
      return "numerical";
  }
  return "unknown";
}

}  // namespace emplace
