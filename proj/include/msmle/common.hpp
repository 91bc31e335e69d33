#ifndef MSMLE_COMMON_HPP
#define MSMLE_COMMON_HPP

#include <stdexcept>
#include <string>

namespace msmle {

enum class ErrorKind { Usage, Data, Numeric };

// All library failures surface as Error; `kind` maps to the CLI exit code
// (usage=1, data=2, numeric=3).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& msg) { return Error(ErrorKind::Usage, msg); }
inline Error data_error(const std::string& msg) { return Error(ErrorKind::Data, msg); }
inline Error numeric_error(const std::string& msg) { return Error(ErrorKind::Numeric, msg); }

}  // namespace msmle

#endif  // MSMLE_COMMON_HPP
