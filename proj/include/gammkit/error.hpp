#ifndef GAMMKIT_ERROR_HPP
#define GAMMKIT_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace gammkit {

enum class ErrorKind {
  Schema,
  Parse,
  EmptyData,
  DegenerateScale,
  Domain,
  Rank,
  Dimension,
  Extrapolation,
  Shape,
  InsufficientData,
  Degenerate,
  Numeric,
  Spec,
  Ordering,
  Lookup,
  Level,
  Nesting,
  Comparison,
  Length,
  Balance,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::EmptyData: return "empty-data error";
    case ErrorKind::DegenerateScale: return "degenerate-scale error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Rank: return "rank error";
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Extrapolation: return "extrapolation error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::InsufficientData: return "insufficient-data error";
    case ErrorKind::Degenerate: return "degenerate error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Spec: return "spec error";
    case ErrorKind::Ordering: return "ordering error";
    case ErrorKind::Lookup: return "lookup error";
    case ErrorKind::Level: return "level error";
    case ErrorKind::Nesting: return "nesting error";
    case ErrorKind::Comparison: return "comparison error";
    case ErrorKind::Length: return "length error";
    case ErrorKind::Balance: return "balance error";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

/// Every failure raised by the library carries a kind so callers (and the
/// CLI) can report the failing stage without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace gammkit

#endif  // GAMMKIT_ERROR_HPP
