#pragma once

// Environment isolator: one build root per task under
// <state_dir>/buildroots/<task_id>/ holding
//   source -> workspace   (symlink, never a copy)
//   output/               package artifacts
//   reports/<plugin>/     CI_REPORT_DIR of each plugin
//   build.json            {"platform": [...], "task_id": N, "head_sha": "..."}
//
// Platform builds are stand-ins: a shell process sleeps for the configured
// cost and writes output/pkg-<platform>.txt. A real platform module (for
// example one that enters a chroot through QEMU user-mode emulation) plugs
// in as an external post-build plugin and receives CI_BUILD_ROOT.

#include <filesystem>
#include <string>
#include <vector>

#include "lightci/config.hpp"
#include "lightci/model.hpp"

namespace lightci {

class RootCollision : public Error {
 public:
  using Error::Error;
};
class DiskFull : public Error {
 public:
  using Error::Error;
};

class Builder {
 public:
  explicit Builder(std::filesystem::path state_dir);

  std::filesystem::path prepare_build_root(const PrTask& task, const std::filesystem::path& workspace,
                                           const std::vector<std::string>& platforms = {});
  void release_build_root(TaskId task_id);
  std::filesystem::path root_dir(TaskId task_id) const;

 private:
  std::filesystem::path state_dir_;
};

/// Shell body of the platform build stand-in.
const std::string& build_stub_script();

/// Deterministic pass/fail draw for a stub build of `platform` at `head_sha`.
bool stub_build_fails(const BuildStub& stub, const std::string& platform, const std::string& head_sha);

}  // namespace lightci
