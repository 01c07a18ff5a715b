#pragma once

// Webhook boundary: signature verification, payload parsing and
// delivery de-duplication. The HTTP routes live in daemon.hpp.
//
// Accepted payload (GitHub pull_request subset):
//   {"action": "opened"|"synchronize"|"closed", "number": N,
//    "pull_request": {"head": {"sha": "...", "ref": "..."}, "base": {"ref": "..."}},
//    "repository": {"full_name": "org/repo", "clone_url": "..."}}

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "lightci/model.hpp"

namespace lightci {

inline constexpr std::string_view kEventKindHeader = "X-Event-Kind";
inline constexpr std::string_view kDeliveryIdHeader = "X-Delivery-Id";
inline constexpr std::string_view kSignatureHeader = "X-Signature-256";

struct Delivery {
  std::string raw_body;
  std::map<std::string, std::string> headers;

  /// Case-insensitive header lookup.
  const std::string* header(std::string_view name) const;
};

class MissingSignature : public Error {
 public:
  MissingSignature() : Error("signature header missing") {}
};

class MalformedPayload : public Error {
 public:
  explicit MalformedPayload(const std::string& what) : Error("malformed payload: " + what) {}
};

/// "sha256=" + lowercase hex HMAC-SHA256(secret, body).
std::string compute_signature(std::string_view secret, std::string_view body);

/// Constant-time check of the signature header. An empty secret disables
/// verification and accepts the delivery.
bool verify_signature(const Delivery& delivery, std::string_view secret);

struct Ignored {
  std::string reason;
};

using ParsedDelivery = std::variant<PrEvent, Ignored>;

ParsedDelivery parse_event(const Delivery& delivery);

/// Remembers the last `capacity` delivery ids.
class DeliveryDedup {
 public:
  explicit DeliveryDedup(std::size_t capacity = 1024) : capacity_(capacity) {}
  /// True if the id is new (and records it); false for a replay.
  bool first_seen(const std::string& delivery_id);

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::deque<std::string> order_;
  std::unordered_set<std::string> seen_;
};

struct DispatchOutcome {
  enum class Kind { Enqueued, Superseded, Cancelled, Ignored };
  Kind kind = Kind::Ignored;
  TaskId task_id = 0;
  std::vector<TaskId> task_ids;  // killed (Superseded) or cancelled (Cancelled)
  std::string reason;
};

std::string_view to_string(DispatchOutcome::Kind k);

}  // namespace lightci
