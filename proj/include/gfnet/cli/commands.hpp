#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gfnet {

/// Runs the `gfnet` command line. Returns the process exit code: 0 on success, nonzero after any error.
/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Exclusive marker file guarding one output directory for the lifetime of the object.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

  static std::filesystem::path path_for(const std::filesystem::path& dir) { return dir / ".gfnet.lock"; }

 private:
  std::filesystem::path path_;
};

}  // namespace gfnet
