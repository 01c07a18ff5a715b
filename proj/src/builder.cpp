#include "lightci/builder.hpp"

#include <cerrno>
#include <fstream>

#include <json.hpp>

namespace lightci {

namespace fs = std::filesystem;

Builder::Builder(fs::path state_dir) : state_dir_(std::move(state_dir)) {
  fs::create_directories(state_dir_ / "buildroots");
}

fs::path Builder::root_dir(TaskId task_id) const {
  return state_dir_ / "buildroots" / std::to_string(task_id);
}

fs::path Builder::prepare_build_root(const PrTask& task, const fs::path& workspace,
                                     const std::vector<std::string>& platforms) {
  const fs::path root = root_dir(task.task_id);
  std::error_code ec;
  if (!fs::create_directory(root, ec)) {
    if (!ec) throw RootCollision("build root already exists: " + root.string());
    if (ec.value() == ENOSPC) throw DiskFull("no space for build root " + root.string());
    throw Error("cannot create build root " + root.string() + ": " + ec.message());
  }
  fs::create_directories(root / "output");
  fs::create_directories(root / "reports");
  if (!workspace.empty()) fs::create_directory_symlink(fs::absolute(workspace), root / "source");

  nlohmann::json manifest{{"platform", platforms}, {"task_id", task.task_id}, {"head_sha", task.head_commit}};
  std::ofstream out(root / "build.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw DiskFull("cannot write " + (root / "build.json").string());
  return root;
}

void Builder::release_build_root(TaskId task_id) {
  std::error_code ec;
  // remove_all does not follow the source symlink.
  fs::remove_all(root_dir(task_id), ec);
}

const std::string& build_stub_script() {
  static const std::string kScript = R"(sleep "${CI_STUB_COST:-1}"
if [ "${CI_STUB_FAIL:-0}" = 1 ]; then
  echo "package build failed for $CI_PLATFORM"
  exit 1
fi
mkdir -p "$CI_BUILD_ROOT/output"
printf 'platform=%s\nsha=%s\n' "$CI_PLATFORM" "$CI_HEAD_SHA" > "$CI_BUILD_ROOT/output/pkg-$CI_PLATFORM.txt"
echo "built pkg-$CI_PLATFORM.txt"
)";
  return kScript;
}

bool stub_build_fails(const BuildStub& stub, const std::string& platform, const std::string& head_sha) {
  if (stub.fail_probability <= 0.0) return false;
  if (stub.fail_probability >= 1.0) return true;
  // FNV-1a over sha and platform.
  std::uint64_t h = 1469598103934665603ull;
  for (char c : head_sha + "/" + platform) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return static_cast<double>(h % 1'000'000) / 1'000'000.0 < stub.fail_probability;
}

}  // namespace lightci
