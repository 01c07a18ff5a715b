#include "lightci/journal.hpp"

#include <fstream>

#include <json.hpp>

namespace lightci {

using nlohmann::json;

std::string format_journal_line(const TransitionRecord& rec) {
  json j;
  j["ts"] = rec.ts;
  j["task_id"] = rec.task_id;
  j["transition"] = (rec.from ? to_string(*rec.from) : std::string("None")) + "->" + to_string(rec.to);
  j["reason"] = rec.reason;
  j["repo"] = rec.repo_id;
  j["pr"] = rec.pr_number;
  j["generation"] = rec.generation;
  return j.dump();
}

JournalRecord parse_journal_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("journal: ") + e.what());
  }
  JournalRecord r;
  try {
    r.ts = j.at("ts").get<Nanos>();
    r.task_id = j.at("task_id").get<TaskId>();
    r.reason = j.value("reason", "");
    r.repo_id = j.value("repo", "");
    r.pr_number = j.value("pr", std::uint64_t{0});
    r.generation = j.value("generation", std::uint64_t{0});
    auto transition = j.at("transition").get<std::string>();
    auto arrow = transition.find("->");
    if (arrow == std::string::npos) throw ParseError("journal: bad transition '" + transition + "'");
    auto from = transition.substr(0, arrow);
    if (from != "None") r.from = parse_task_state(from);
    r.to = parse_task_state(transition.substr(arrow + 2));
  } catch (const json::exception& e) {
    throw ParseError(std::string("journal: ") + e.what());
  }
  return r;
}

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  file_ = std::fopen(path_.c_str(), "a");
  if (!file_) throw Error("cannot open journal " + path_.string());
}

Journal::~Journal() {
  if (file_) std::fclose(file_);
}

void Journal::append(const TransitionRecord& rec) {
  std::string line = format_journal_line(rec);
  line.push_back('\n');
  std::lock_guard lock(mu_);
  std::fwrite(line.data(), 1, line.size(), file_);
  std::fflush(file_);
}

std::vector<JournalRecord> read_journal(const std::filesystem::path& path) {
  std::vector<JournalRecord> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(parse_journal_line(line));
  return out;
}

ReplayReport replay_journal(const std::vector<JournalRecord>& records) {
  ReplayReport rep;
  for (const auto& r : records) {
    auto it = rep.final_states.find(r.task_id);
    if (!r.from) {
      if (it != rep.final_states.end())
        rep.violations.push_back("task " + std::to_string(r.task_id) + " created twice");
      if (r.to != TaskState::ready())
        rep.violations.push_back("task " + std::to_string(r.task_id) + " created in " +
                                 to_string(r.to));
      rep.final_states[r.task_id] = r.to;
      ++rep.counters.enqueued;
      continue;
    }
    if (it == rep.final_states.end()) {
      rep.violations.push_back("task " + std::to_string(r.task_id) + " transitions before creation");
      continue;
    }
    if (it->second != *r.from)
      rep.violations.push_back("task " + std::to_string(r.task_id) + ": recorded from " +
                               to_string(*r.from) + " but was " + to_string(it->second));
    if (!validate_transition(*r.from, r.to))
      rep.violations.push_back("task " + std::to_string(r.task_id) + ": illegal " +
                               to_string(*r.from) + " -> " + to_string(r.to));
    it->second = r.to;
  }
  for (const auto& [id, st] : rep.final_states) {
    if (st == TaskState::exit(Verdict::Pass)) ++rep.counters.passed;
    else if (st == TaskState::exit(Verdict::Fail)) ++rep.counters.failed;
    else if (st == TaskState::exit(Verdict::Killed)) ++rep.counters.killed;
    else ++rep.counters.live;
  }
  return rep;
}

}  // namespace lightci
