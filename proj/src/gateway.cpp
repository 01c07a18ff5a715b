#include "lightci/gateway.hpp"

#include <algorithm>
#include <cctype>

#include <json.hpp>
#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

namespace lightci {

using nlohmann::json;

const std::string* Delivery::header(std::string_view name) const {
  for (const auto& [k, v] : headers) {
    if (k.size() == name.size() &&
        std::equal(k.begin(), k.end(), name.begin(), [](char a, char b) {
          return std::tolower(static_cast<unsigned char>(a)) ==
                 std::tolower(static_cast<unsigned char>(b));
        }))
      return &v;
  }
  return nullptr;
}

std::string compute_signature(std::string_view secret, std::string_view body) {
  unsigned char mac[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  HMAC(EVP_sha256(), secret.data(), static_cast<int>(secret.size()),
       reinterpret_cast<const unsigned char*>(body.data()), body.size(), mac, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out = "sha256=";
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[mac[i] >> 4]);
    out.push_back(kHex[mac[i] & 0xf]);
  }
  return out;
}

bool verify_signature(const Delivery& delivery, std::string_view secret) {
  if (secret.empty()) return true;
  const std::string* got = delivery.header(kSignatureHeader);
  if (!got) throw MissingSignature();
  const std::string want = compute_signature(secret, delivery.raw_body);
  if (got->size() != want.size()) return false;
  return CRYPTO_memcmp(got->data(), want.data(), want.size()) == 0;
}

namespace {

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null())
    throw MalformedPayload("missing field " + path + key);
  return obj.at(key);
}

std::string require_string(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) throw MalformedPayload("field " + path + key + " is not a string");
  return v.get<std::string>();
}

}  // namespace

ParsedDelivery parse_event(const Delivery& delivery) {
  if (const std::string* kind = delivery.header(kEventKindHeader);
      kind && *kind != "pull_request")
    return Ignored{"event kind " + *kind};

  json doc;
  try {
    doc = json::parse(delivery.raw_body);
  } catch (const json::parse_error& e) {
    throw MalformedPayload(e.what());
  }
  if (!doc.is_object()) throw MalformedPayload("body is not an object");

  const std::string action = require_string(doc, "action", "");
  PrEvent ev;
  if (action == "opened" || action == "reopened") ev.action = PrAction::Opened;
  else if (action == "synchronize" || action == "synchronized") ev.action = PrAction::Synchronized;
  else if (action == "closed") ev.action = PrAction::Closed;
  else return Ignored{"action " + action};

  const json& number = require(doc, "number", "");
  if (!number.is_number_integer() || number.get<std::int64_t>() < 1)
    throw MalformedPayload("field number is not a positive integer");
  ev.pr_number = number.get<std::uint64_t>();

  const json& pr = require(doc, "pull_request", "");
  const json& head = require(pr, "head", "pull_request.");
  ev.head_commit = require_string(head, "sha", "pull_request.head.");
  std::transform(ev.head_commit.begin(), ev.head_commit.end(), ev.head_commit.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (!is_commit_id(ev.head_commit))
    throw MalformedPayload("field pull_request.head.sha is not a 40-hex commit id");
  ev.source_branch = require_string(head, "ref", "pull_request.head.");
  ev.target_branch = require_string(require(pr, "base", "pull_request."), "ref", "pull_request.base.");

  const json& repo = require(doc, "repository", "");
  ev.repo_id = require_string(repo, "full_name", "repository.");
  ev.clone_url = require_string(repo, "clone_url", "repository.");
  if (const std::string* id = delivery.header(kDeliveryIdHeader)) ev.delivery_id = *id;
  return ev;
}

bool DeliveryDedup::first_seen(const std::string& delivery_id) {
  if (delivery_id.empty()) return true;
  std::lock_guard lock(mu_);
  if (seen_.count(delivery_id)) return false;
  seen_.insert(delivery_id);
  order_.push_back(delivery_id);
  if (order_.size() > capacity_) {
    seen_.erase(order_.front());
    order_.pop_front();
  }
  return true;
}

std::string_view to_string(DispatchOutcome::Kind k) {
  switch (k) {
    case DispatchOutcome::Kind::Enqueued: return "Enqueued";
    case DispatchOutcome::Kind::Superseded: return "Superseded";
    case DispatchOutcome::Kind::Cancelled: return "Cancelled";
    case DispatchOutcome::Kind::Ignored: return "Ignored";
  }
  return "?";
}

}  // namespace lightci
