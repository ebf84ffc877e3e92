#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace equidiv {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Mat = Eigen::MatrixXd;

// Values double as process exit codes.
enum class ErrorKind : int {
  config = 2,
  integration = 3,
  frame = 4,
  shadow = 5,
  validation = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::integration: return "integration";
    case ErrorKind::frame: return "frame";
    case ErrorKind::shadow: return "shadow";
    case ErrorKind::validation: return "validation";
  }
  return "unknown";
}

/// Half-open range of orbit indices [begin, end).
struct IndexRange {
  Index begin = 0;
  Index end = 0;

  Index size() const { return end > begin ? end - begin : 0; }
  bool empty() const { return size() == 0; }
  bool contains(Index k) const { return k >= begin && k < end; }

  IndexRange shrink(Index by) const { return {begin + by, end - by}; }

  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

}  // namespace equidiv
