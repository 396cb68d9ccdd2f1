#pragma once
#include <stdexcept>
#include <string>

namespace relic {

// Error categories; the numeric values are the CLI's stable exit codes.
enum class errc : int {
  usage = 2,         // malformed request: bad arguments, shapes, ranges
  infeasible = 3,    // well-formed but unsatisfiable: budget/precondition violations
  verification = 4,  // a checked numeric contract failed at run time
};

class error : public std::runtime_error {
 public:
  error(errc kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  errc kind() const noexcept { return kind_; }

 private:
  errc kind_;
};

[[noreturn]] inline void fail_usage(const std::string& m) { throw error(errc::usage, m); }
[[noreturn]] inline void fail_infeasible(const std::string& m) { throw error(errc::infeasible, m); }
[[noreturn]] inline void fail_verification(const std::string& m) { throw error(errc::verification, m); }

inline void require(bool cond, errc kind, const std::string& m) {
  if (!cond) throw error(kind, m);
}

}  // namespace relic
