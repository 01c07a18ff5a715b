#include "lightci/checks.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <regex>
#include <sstream>

#include "lightci/process.hpp"
#include "lightci/source_manager.hpp"

namespace lightci {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kEmptyTree = "4b825dc642cb6eb9a060e54bf8d69288fbee4904";
constexpr std::size_t kBinaryProbe = 8000;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c); };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

CheckResult make_result(std::string name, bool pass, std::string report) {
  CheckResult r;
  r.plugin_name = std::move(name);
  r.status = pass ? CheckStatus::Pass : CheckStatus::Fail;
  r.report_text = bound_report(std::move(report));
  return r;
}

bool content_checkable(const ChangedFile& f) { return f.is_regular() && !is_binary(f); }

// Parses `git diff -U0` output into per-file added/removed lines.
void attach_diff_lines(const std::string& diff, std::map<std::string, ChangedFile*>& by_path) {
  ChangedFile* cur = nullptr;
  bool in_header = false;
  std::size_t new_line = 0;
  std::size_t old_line = 0;
  std::istringstream in(diff);
  std::string line;
  static const std::regex hunk(R"(^@@ -(\d+)(?:,\d+)? \+(\d+)(?:,\d+)? @@)");
  while (std::getline(in, line)) {
    if (line.rfind("diff --git ", 0) == 0) {
      cur = nullptr;
      in_header = true;
    } else if (line.rfind("@@ ", 0) == 0) {
      in_header = false;
      std::smatch m;
      if (std::regex_search(line, m, hunk)) {
        old_line = std::stoul(m[1]);
        new_line = std::stoul(m[2]);
      }
    } else if (in_header) {
      if (line.rfind("+++ ", 0) == 0) {
        std::string path = line.substr(4);
        if (path.rfind("b/", 0) == 0) path = path.substr(2);
        auto it = by_path.find(path);
        cur = it == by_path.end() ? nullptr : it->second;
      }
    } else if (cur && !line.empty() && line[0] == '+') {
      cur->added_lines.push_back({new_line++, line.substr(1)});
    } else if (cur && !line.empty() && line[0] == '-') {
      cur->removed_lines.push_back({old_line++, line.substr(1)});
    }
  }
}

}  // namespace

std::string read_content(const ChangedFile& f, std::size_t limit) {
  if (f.content) return limit ? f.content->substr(0, limit) : *f.content;
  std::ifstream in(f.content_path, std::ios::binary);
  if (!in) return {};
  if (limit == 0) {
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  std::string buf(limit, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(limit));
  buf.resize(static_cast<std::size_t>(in.gcount()));
  return buf;
}

bool is_binary(const ChangedFile& f) {
  return read_content(f, kBinaryProbe).find('\0') != std::string::npos;
}

ChangeSet collect_changeset(const fs::path& workspace, const std::string& target_branch) {
  ChangeSet cs;
  std::string base;
  for (const std::string& ref : {"refs/heads/" + target_branch, "refs/remotes/origin/" + target_branch}) {
    auto mb = run_git({"merge-base", ref, "HEAD"}, workspace);
    if (mb.ok()) {
      base = trim(mb.output);
      break;
    }
  }

  const std::string range = base.empty() ? "HEAD" : base + "..HEAD";
  std::vector<std::string> log_args{"log", "--format=%H%x1f%an%x1f%ae%x1f%at%x1f%B%x1e"};
  if (base.empty()) log_args.push_back("-1");
  log_args.push_back(range);
  auto log = run_git(log_args, workspace);
  if (!log.ok()) throw Error("git log failed: " + log.output);
  for (const auto& rec : split(log.output, '\x1e')) {
    std::string r = rec;
    r.erase(0, r.find_first_not_of('\n'));
    if (r.empty()) continue;
    auto fields = split(r, '\x1f');
    if (fields.size() < 4) continue;
    CommitInfo c;
    c.sha = fields[0];
    c.author_name = fields[1];
    c.author_email = fields[2];
    c.author_timestamp = std::stoll(fields[3]);
    c.message = fields.size() > 4 ? fields[4] : "";
    cs.commits.push_back(std::move(c));
  }

  const std::string from = base.empty() ? std::string(kEmptyTree) : base;
  auto raw = run_git({"-c", "core.quotePath=false", "diff", "--raw", "-z", "--no-renames",
                      "--diff-filter=AMT", from, "HEAD"},
                     workspace);
  if (!raw.ok()) throw Error("git diff failed: " + raw.output);
  auto parts = split(raw.output, '\0');
  for (std::size_t i = 0; i + 1 < parts.size(); i += 2) {
    // ":oldmode newmode oldsha newsha status"
    std::istringstream meta(parts[i].substr(1));
    std::string old_mode, new_mode;
    meta >> old_mode >> new_mode;
    ChangedFile f;
    f.path = parts[i + 1];
    f.mode = static_cast<std::uint32_t>(std::stoul(new_mode, nullptr, 8));
    f.content_path = workspace / f.path;
    std::error_code ec;
    if (f.is_regular()) f.size = fs::file_size(f.content_path, ec);
    cs.changed_files.push_back(std::move(f));
  }

  std::map<std::string, ChangedFile*> by_path;
  for (auto& f : cs.changed_files) by_path[f.path] = &f;
  auto diff = run_git({"-c", "core.quotePath=false", "diff", "-U0", "--no-color", "--no-renames",
                       "--no-ext-diff", from, "HEAD"},
                      workspace);
  if (!diff.ok()) throw Error("git diff failed: " + diff.output);
  attach_diff_lines(diff.output, by_path);
  return cs;
}

// ---------------------------------------------------------------------------

CheckResult check_signed_off(const ChangeSet& changes) {
  static const std::regex trailer(R"(^Signed-off-by: .+ <.+@.+>$)");
  std::vector<std::string> offenders;
  for (const auto& c : changes.commits) {
    bool found = false;
    for (auto line : split(c.message, '\n')) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (std::regex_match(line, trailer)) {
        found = true;
        break;
      }
    }
    if (!found) offenders.push_back(c.sha);
  }
  std::string report;
  for (const auto& sha : offenders) report += "missing Signed-off-by: " + sha + "\n";
  return make_result("signed-off", offenders.empty(), report);
}

CheckResult check_nobody(const ChangeSet& changes) {
  std::string report;
  for (const auto& c : changes.commits) {
    const auto first_line = c.message.substr(0, c.message.find('\n'));
    if (trim(first_line).empty()) report += c.sha + ": empty commit subject\n";
    if (trim(c.author_name).empty()) report += c.sha + ": empty author name\n";
    if (trim(c.author_email).empty()) report += c.sha + ": empty author email\n";
  }
  return make_result("nobody", report.empty(), report);
}

CheckResult check_newline(const ChangeSet& changes) {
  std::string report;
  for (const auto& f : changes.changed_files) {
    if (!content_checkable(f)) continue;
    const std::string text = read_content(f);
    if (!text.empty() && text.back() != '\n') report += f.path + ": no newline at end of file\n";
  }
  return make_result("newline", report.empty(), report);
}

CheckResult check_file_size(const ChangeSet& changes, std::uint64_t limit) {
  std::string report;
  for (const auto& f : changes.changed_files)
    if (f.size > limit)
      report += f.path + ": " + std::to_string(f.size) + " bytes exceeds limit of " +
                std::to_string(limit) + "\n";
  return make_result("file-size", report.empty(), report);
}

CheckResult check_hardcoded_paths(const ChangeSet& changes, const std::vector<std::string>& patterns) {
  std::string report;
  for (const auto& f : changes.changed_files) {
    if (patterns.empty() || !content_checkable(f)) continue;
    for (const auto& line : f.added_lines)
      for (const auto& p : patterns)
        if (!p.empty() && line.text.find(p) != std::string::npos) {
          report += f.path + ":" + std::to_string(line.line_no) + ": hard-coded path '" + p + "'\n";
          break;
        }
  }
  return make_result("hardcoded-path", report.empty(), report);
}

CheckResult check_executable(const ChangeSet& changes, const std::vector<std::string>& allowlist) {
  std::string report;
  for (const auto& f : changes.changed_files) {
    if (!f.executable()) continue;
    if (read_content(f, 2) == "#!") continue;
    if (std::any_of(allowlist.begin(), allowlist.end(),
                    [&](const std::string& ext) { return ends_with(f.path, ext); }))
      continue;
    report += f.path + ": executable without shebang or allowed extension\n";
  }
  return make_result("executable", report.empty(), report);
}

CheckResult check_timestamp(const ChangeSet& changes, std::int64_t skew_seconds,
                            std::int64_t now_unix_seconds) {
  std::string report;
  for (const auto& c : changes.commits)
    if (c.author_timestamp > now_unix_seconds + skew_seconds)
      report += c.sha + ": author timestamp " + std::to_string(c.author_timestamp) +
                " is in the future\n";
  return make_result("timestamp", report.empty(), report);
}

bool indent_violation(const std::string& line) {
  const auto end = line.find_first_not_of(" \t");
  const std::string_view lead(line.data(), end == std::string::npos ? line.size() : end);
  return lead.find(" \t") != std::string_view::npos;
}

CheckResult check_indent(const ChangeSet& changes, const std::optional<ToolSpec>& tool,
                         const fs::path& workspace) {
  if (tool && find_on_path(tool->name) && find_on_path(tool->argv.front())) {
    ToolRunOptions opts;
    opts.workspace = workspace;
    return run_tool_wrapper("indent", *tool, changes, opts);
  }
  std::string report;
  for (const auto& f : changes.changed_files) {
    if (!content_checkable(f)) continue;
    for (const auto& line : f.added_lines)
      if (indent_violation(line.text))
        report += f.path + ":" + std::to_string(line.line_no) + ": space before tab in indentation\n";
  }
  return make_result("indent", report.empty(), report);
}

// ---------------------------------------------------------------------------

const std::map<std::string, ToolSpec>& default_tool_specs() {
  static const std::vector<std::string> kC{".c", ".cc", ".cpp", ".cxx", ".h", ".hh", ".hpp"};
  static const std::map<std::string, ToolSpec> kSpecs{
      {"clang-format", {"clang-format", {"clang-format", "--dry-run", "-Werror", "{files}"}, {0}, kC}},
      {"cppcheck", {"cppcheck", {"cppcheck", "--error-exitcode=1", "--quiet", "{files}"}, {0}, kC}},
      {"pylint", {"pylint", {"pylint", "--score=n", "{files}"}, {0}, {".py"}}},
      {"indent", {"indent", {"sh", "-c", "for f; do indent -st \"$f\" | cmp -s - \"$f\" || { echo \"$f\"; exit 1; }; done", "indent", "{files}"}, {0}, {".c", ".h"}}},
      {"doc-tag", {"doxygen", {"doxygen", "-x_noenv"}, {0}, {}}},
      {"doc-build", {"doxygen", {"doxygen", "-"}, {0}, {}}},
      {"scancode", {"scancode", {"scancode", "--copyright", "--quiet", "--json-pp", "-", "{files}"}, {0}, {}}},
      {"sloccount", {"sloccount", {"sloccount", "."}, {0}, {}}},
      {"flawfinder", {"flawfinder", {"flawfinder", "--error-level=4", "--quiet", "{files}"}, {0}, kC}},
  };
  return kSpecs;
}

CheckResult run_tool_wrapper(const std::string& module, const ToolSpec& tool,
                             const ChangeSet& changes, const ToolRunOptions& opts) {
  CheckResult r;
  r.plugin_name = module;
  const std::string& program = tool.argv.front();
  // "sh -c" wrappers name the real tool in ToolSpec::name.
  if (!find_on_path(program) || !find_on_path(tool.name)) {
    r.status = CheckStatus::Skipped;
    r.report_text = "tool absent: " + tool.name;
    return r;
  }
  std::vector<std::string> files;
  for (const auto& f : changes.changed_files) {
    if (!f.is_regular()) continue;
    if (tool.extensions.empty() ||
        std::any_of(tool.extensions.begin(), tool.extensions.end(),
                    [&](const std::string& ext) { return ends_with(f.path, ext); }))
      files.push_back(f.path);
  }
  if (files.empty() && !tool.extensions.empty()) {
    r.status = CheckStatus::Skipped;
    r.report_text = "no matching files";
    return r;
  }

  SpawnSpec spec;
  spec.cwd = opts.workspace;
  spec.env = inherited_environment();
  for (const auto& arg : tool.argv) {
    if (arg == "{files}") spec.argv.insert(spec.argv.end(), files.begin(), files.end());
    else spec.argv.push_back(arg);
  }
  SuperviseOptions sup;
  sup.timeout = std::chrono::seconds(opts.timeout_seconds);
  auto out = run_supervised(spec, sup);
  r.duration_ms = out.duration_ms;
  r.report_text = bound_report(std::move(out.output));
  switch (out.kind) {
    case ProcessOutcome::Kind::SpawnFailed:
    case ProcessOutcome::Kind::Signaled:
    case ProcessOutcome::Kind::Cancelled:
      r.status = CheckStatus::Crashed;
      break;
    case ProcessOutcome::Kind::TimedOut:
      r.status = CheckStatus::TimedOut;
      break;
    case ProcessOutcome::Kind::Exited:
      r.status = std::find(tool.pass_exit_codes.begin(), tool.pass_exit_codes.end(), out.code) !=
                         tool.pass_exit_codes.end()
                     ? CheckStatus::Pass
                     : CheckStatus::Fail;
      break;
  }
  if (module == "sloccount" && r.status == CheckStatus::Pass && opts.sloc_max) {
    static const std::regex total(R"(Total Physical Source Lines of Code \(SLOC\)\s*=\s*([\d,]+))");
    std::smatch m;
    if (std::regex_search(r.report_text, m, total)) {
      std::string digits = m[1];
      std::erase(digits, ',');
      if (std::stoull(digits) > *opts.sloc_max) r.status = CheckStatus::Fail;
    }
  }
  return r;
}

std::optional<CheckResult> run_native_check(const std::string& module, const ChangeSet& changes,
                                            const ServiceConfig& config, const fs::path& workspace) {
  const Thresholds& t = config.thresholds;
  if (module == "signed-off") return check_signed_off(changes);
  if (module == "nobody") return check_nobody(changes);
  if (module == "newline") return check_newline(changes);
  if (module == "file-size") return check_file_size(changes, t.file_size_limit_bytes);
  if (module == "hardcoded-path") return check_hardcoded_paths(changes, t.hardcoded_path_patterns);
  if (module == "executable") return check_executable(changes, t.executable_allowlist);
  if (module == "timestamp") {
    const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    return check_timestamp(changes, t.timestamp_skew_seconds, now);
  }
  if (module == "indent") {
    std::optional<ToolSpec> tool;
    if (auto it = config.tools.find("indent"); it != config.tools.end()) tool = it->second;
    else tool = default_tool_specs().at("indent");
    return check_indent(changes, tool, workspace);
  }
  return std::nullopt;
}

}  // namespace lightci
