#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace intentkit {

enum class ExitCode : int { ok = 0, internal = 1, config = 2, data = 3, backend = 4, validation = 5, io = 6 };

// Run configuration as a JSON document. Unknown keys and mistyped values are ConfigErrors; missing
// keys take their defaults.
class RunConfig {
  public:
    static const nlohmann::json& defaults();
    static RunConfig from_json(const nlohmann::json& overrides);

    const nlohmann::json& data() const { return data_; }
    nlohmann::json& data() { return data_; }
    std::string digest() const;  // fnv1a64 of the compact dump

  private:
    nlohmann::json data_;
};

// Entry point behind the intentkit binary. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace intentkit
