#pragma once

#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

namespace clitest {

namespace fs = std::filesystem;

struct Run {
  int status = -1;
  std::string stdout_text;
  std::string stderr_text;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Fresh scratch directory per call.
inline fs::path scratch(const std::string& tag) {
  static std::atomic<int> counter{0};
  const fs::path dir = fs::temp_directory_path() / ("stagdid_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline fs::path write_config(const fs::path& dir, const nlohmann::json& j, const std::string& name = "config.json") {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

inline Run run_cli(const std::string& args, const fs::path& workdir) {
  const fs::path out = workdir / "stdout.txt", err = workdir / "stderr.txt";
  const std::string cmd = std::string("\"") + STAGDID_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
  Run r;
  const int raw = std::system(cmd.c_str());
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.stdout_text = slurp(out);
  r.stderr_text = slurp(err);
  return r;
}

inline nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace clitest
