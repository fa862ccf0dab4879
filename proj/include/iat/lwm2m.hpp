#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iat/coap.hpp"
#include "iat/object_model.hpp"
#include "iat/transport.hpp"
#include "iat/wrapper_gen.hpp"

namespace iat::lwm2m {

// Time base used for observe pacing (pmin/pmax). The plant supplies its own
// clock so notification spacing follows simulated time.
class TimeSource {
public:
    virtual ~TimeSource() = default;
    virtual double now() const = 0;
};

std::shared_ptr<TimeSource> steady_time_source();

struct NotifyAttributes {
    std::optional<double> pmin_s;
    std::optional<double> pmax_s;
};

struct RegistrationEntry {
    std::string endpoint_name;
    net::Address peer;
    double lifetime_s = 0;
    std::string location;  // "/rd/<n>"
    std::vector<std::pair<std::uint16_t, std::uint16_t>> object_links;
};

struct Response {
    coap::RequestStatus status = coap::RequestStatus::Timeout;
    std::uint8_t code = 0;
    std::vector<std::uint8_t> payload;
    std::string location;

    bool ok() const { return status == coap::RequestStatus::Ok && coap::code_class(code) == 2; }
    std::string payload_text() const { return std::string(payload.begin(), payload.end()); }
    std::string code_text() const { return coap::code_to_string(code); }
};

// ---------------------------------------------------------------------------
// Client: lives inside each mechatronic component. Serves the service
// enablement + information reporting interfaces over its dispatch table and
// keeps one registration alive (update every lifetime/2).

struct ClientConfig {
    std::string endpoint_name;
    double lifetime_s = 60.0;
    bool auto_update = true;
};

class Lwm2mClient {
public:
    Lwm2mClient(std::unique_ptr<net::DatagramSocket> socket,
                std::vector<model::ObjectTypeDescriptor> descriptors, gen::DispatchTable table,
                std::shared_ptr<TimeSource> time = steady_time_source(),
                coap::ExchangeConfig config = {});
    ~Lwm2mClient();

    Lwm2mClient(const Lwm2mClient&) = delete;
    Lwm2mClient& operator=(const Lwm2mClient&) = delete;

    net::Address local_address() const;

    // Links for every (object, instance) in the table, sorted.
    std::vector<std::pair<std::uint16_t, std::uint16_t>> object_links() const;
    std::string registration_payload() const;

    // Registers with the server; on success schedules periodic updates.
    bool register_with(const net::Address& server, ClientConfig config);
    void deregister();
    std::optional<std::string> location() const;

    // Evaluates observe relations against current values; called after every
    // plant step and periodically from an internal pacing thread.
    void notify_state_changed();

    // Enables Create for a multiple-instance type: the factory returns the
    // handler set (by resource id) for a freshly created instance.
    using InstanceFactory = std::function<std::map<std::uint16_t, gen::Handlers>(std::uint16_t)>;
    void set_instance_factory(std::uint16_t type_id, InstanceFactory factory);

    std::size_t observe_relation_count() const;

    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Server: accepts registrations under /rd and issues the device management &
// service enablement operations against registered clients.

class Lwm2mServer {
public:
    explicit Lwm2mServer(std::unique_ptr<net::DatagramSocket> socket,
                         coap::ExchangeConfig config = {});
    ~Lwm2mServer();

    Lwm2mServer(const Lwm2mServer&) = delete;
    Lwm2mServer& operator=(const Lwm2mServer&) = delete;

    net::Address local_address() const;
    void stop();

    // Type registry used to parse typed read results.
    void set_registry(std::map<std::uint16_t, model::ObjectTypeDescriptor> types);

    std::vector<RegistrationEntry> registrations() const;
    std::optional<RegistrationEntry> find_registration(std::string_view endpoint_name) const;

    Response read(const RegistrationEntry& entry, const model::ResourcePath& path);
    Response write(const RegistrationEntry& entry, const model::ResourcePath& path,
                   const model::ResourceValue& value);
    Response write_text(const RegistrationEntry& entry, const model::ResourcePath& path,
                        std::string_view text);
    Response execute(const RegistrationEntry& entry, const model::ResourcePath& path,
                     std::string_view argument = {});
    Response discover(const RegistrationEntry& entry, const model::ResourcePath& path);
    Response write_attributes(const RegistrationEntry& entry, const model::ResourcePath& path,
                              const NotifyAttributes& attrs);
    Response create(const RegistrationEntry& entry, std::uint16_t object_id,
                    std::string_view payload = {});
    Response remove(const RegistrationEntry& entry, const model::ResourcePath& path);

    // Typed read helper: single value at resource depth (uses the registry).
    std::optional<model::ResourceValue> read_value(const RegistrationEntry& entry,
                                                   const model::ResourcePath& path);

    struct ObserveHandle {
        std::vector<std::uint8_t> token;
        model::ResourcePath path;
    };
    using NotificationFn = std::function<void(std::uint32_t sequence, const std::string& payload)>;

    Response observe(const RegistrationEntry& entry, const model::ResourcePath& path,
                     NotificationFn fn, ObserveHandle& handle);
    Response cancel_observe(const RegistrationEntry& entry, const ObserveHandle& handle);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace iat::lwm2m
