#pragma once

// Native implementations of the source-level check modules and a wrapper
// for modules backed by external analysis tools.
//
// Every check is a pure function of (ChangeSet, parameters) and looks only
// at changed files and the PR's own commits. Default rules:
//   signed-off      each commit message has "Signed-off-by: Name <a@b>"
//   nobody          non-blank subject line, non-empty author name and email
//   newline         text files end in '\n' (NUL in first 8000 bytes = binary)
//   file-size       size <= limit (strictly greater fails)
//   hardcoded-path  no configured pattern inside an added line
//   executable      exec bit requires "#!" or an allowlisted extension
//   timestamp       author time <= now + skew (strictly greater fails)
//   indent          no space-then-tab in leading whitespace of added lines

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lightci/config.hpp"
#include "lightci/model.hpp"

namespace lightci {

struct DiffLine {
  std::size_t line_no = 0;  // 1-based, in the new (added) or old (removed) file
  std::string text;
};

struct ChangedFile {
  std::string path;  // relative to the workspace root
  std::uint32_t mode = 0100644;
  std::uint64_t size = 0;
  std::filesystem::path content_path;  // read lazily when `content` is empty
  std::optional<std::string> content;
  std::vector<DiffLine> added_lines;
  std::vector<DiffLine> removed_lines;

  bool is_regular() const { return (mode & 0170000) == 0100000; }
  bool executable() const { return is_regular() && (mode & 0111) != 0; }
};

struct CommitInfo {
  std::string sha;
  std::string author_name;
  std::string author_email;
  std::int64_t author_timestamp = 0;  // unix seconds
  std::string message;
};

struct ChangeSet {
  std::vector<ChangedFile> changed_files;
  std::vector<CommitInfo> commits;
};

/// Builds the change set of `workspace` (HEAD) against the merge base with
/// `target_branch`. Falls back to HEAD's own commit when no base exists.
ChangeSet collect_changeset(const std::filesystem::path& workspace, const std::string& target_branch);

/// First `limit` bytes (all when limit == 0) of a changed file.
std::string read_content(const ChangedFile& f, std::size_t limit = 0);
bool is_binary(const ChangedFile& f);

CheckResult check_signed_off(const ChangeSet& changes);
CheckResult check_nobody(const ChangeSet& changes);
CheckResult check_newline(const ChangeSet& changes);
CheckResult check_file_size(const ChangeSet& changes, std::uint64_t limit);
CheckResult check_hardcoded_paths(const ChangeSet& changes, const std::vector<std::string>& patterns);
CheckResult check_executable(const ChangeSet& changes, const std::vector<std::string>& allowlist);
CheckResult check_timestamp(const ChangeSet& changes, std::int64_t skew_seconds,
                            std::int64_t now_unix_seconds);
/// Delegates to the configured "indent" tool when it is installed;
/// otherwise applies the space-then-tab heuristic.
CheckResult check_indent(const ChangeSet& changes, const std::optional<ToolSpec>& tool = {},
                         const std::filesystem::path& workspace = {});
bool indent_violation(const std::string& line);

/// Default command lines for the tool-backed modules, keyed by module name.
const std::map<std::string, ToolSpec>& default_tool_specs();

struct ToolRunOptions {
  std::filesystem::path workspace;
  int timeout_seconds = 600;
  std::optional<std::uint64_t> sloc_max;  // sloccount only
};

/// Skipped when the tool is not on PATH or no changed file matches its
/// extensions; otherwise maps the exit code through pass_exit_codes.
CheckResult run_tool_wrapper(const std::string& module, const ToolSpec& tool,
                             const ChangeSet& changes, const ToolRunOptions& opts);

/// Dispatches a native module by name ("signed-off", ...). Returns nullopt
/// for names that are not native checks.
std::optional<CheckResult> run_native_check(const std::string& module, const ChangeSet& changes,
                                            const ServiceConfig& config,
                                            const std::filesystem::path& workspace);

}  // namespace lightci
