#include "gera/config_defaults.hpp"

#include <algorithm>

namespace gera::config {

namespace fs = store::fs;

namespace {

const char* kNormalizationJson = R"({
  "source_utc_offset_minutes": {"default": 0},
  "entities": {
    "service_order": {
      "rules": {
        "order_id": [{"kind": "trim"}],
        "subscriber_id": [{"kind": "trim"}],
        "status": [{"kind": "trim"}, {"kind": "case_fold"}],
        "trial": [{"kind": "trim"}, {"kind": "case_fold"}],
        "location_id": [{"kind": "trim"}],
        "event_date": [{"kind": "trim"}, {"kind": "date_parse", "formats": ["YYYY-MM-DD", "MM/DD/YYYY"]}]
      }
    },
    "provisioning_event": {
      "rules": {
        "order_id": [{"kind": "trim"}],
        "circuit_id": [{"kind": "trim"}, {"kind": "crosswalk_lookup", "crosswalk": "circuit_to_account", "emit_as": "account_id"}],
        "location_id": [{"kind": "trim"}],
        "event_date": [{"kind": "trim"}, {"kind": "date_parse", "formats": ["YYYY-MM-DD", "MM/DD/YYYY"]}]
      }
    },
    "invoice_line": {
      "rules": {
        "invoice_id": [{"kind": "trim"}],
        "account_id": [{"kind": "trim"}],
        "subscriber_id": [{"kind": "trim"}],
        "amount": [{"kind": "trim"}],
        "location_id": [{"kind": "trim"}],
        "event_date": [{"kind": "trim"}, {"kind": "date_parse", "formats": ["YYYY-MM-DD", "MM/DD/YYYY"]}]
      }
    },
    "payment_settlement": {
      "rules": {
        "payment_ref": [{"kind": "trim"}],
        "invoice_id": [{"kind": "trim"}],
        "amount": [{"kind": "trim"}],
        "event_date": [{"kind": "trim"}, {"kind": "date_parse", "formats": ["YYYY-MM-DD", "MM/DD/YYYY"]}]
      }
    },
    "purchase_order": {
      "rules": {
        "po_id": [{"kind": "trim"}],
        "material_code": [{"kind": "trim"}, {"kind": "strip_leading_zeros"}],
        "location_id": [{"kind": "trim"}],
        "quantity": [{"kind": "trim"}],
        "amount": [{"kind": "trim"}],
        "event_date": [{"kind": "trim"}, {"kind": "date_parse", "formats": ["YYYY-MM-DD", "MM/DD/YYYY"]}]
      }
    },
    "receiving": {
      "rules": {
        "po_id": [{"kind": "trim"}],
        "material_code": [{"kind": "trim"}, {"kind": "strip_leading_zeros"}],
        "location_id": [{"kind": "trim"}],
        "quantity": [{"kind": "trim"}],
        "receipt_no": [{"kind": "trim"}],
        "event_date": [{"kind": "trim"}, {"kind": "date_parse", "formats": ["YYYY-MM-DD", "MM/DD/YYYY"]}]
      }
    },
    "issuance": {
      "rules": {
        "po_id": [{"kind": "trim"}],
        "material_code": [{"kind": "trim"}, {"kind": "strip_leading_zeros"}],
        "location_id": [{"kind": "trim"}],
        "quantity": [{"kind": "trim"}],
        "issue_no": [{"kind": "trim"}],
        "event_date": [{"kind": "trim"}, {"kind": "date_parse", "formats": ["YYYY-MM-DD", "MM/DD/YYYY"]}]
      }
    },
    "installation": {
      "rules": {
        "po_id": [{"kind": "trim"}],
        "material_code": [{"kind": "trim"}, {"kind": "strip_leading_zeros"}],
        "location_id": [{"kind": "trim"}],
        "quantity": [{"kind": "trim"}],
        "event_date": [{"kind": "trim"}, {"kind": "date_parse", "formats": ["YYYY-MM-DD", "MM/DD/YYYY"]}]
      }
    },
    "inventory_movement": {
      "rules": {
        "material_code": [{"kind": "trim"}, {"kind": "strip_leading_zeros"}],
        "location_id": [{"kind": "trim"}],
        "movement_type": [{"kind": "trim"}, {"kind": "case_fold"}],
        "quantity": [{"kind": "trim"}],
        "event_date": [{"kind": "trim"}, {"kind": "date_parse", "formats": ["YYYY-MM-DD", "MM/DD/YYYY"]}]
      }
    }
  }
})";

const char* kSchemasJson = R"({
  "entities": {
    "service_order": {
      "required": ["order_id", "subscriber_id", "status", "event_date"],
      "optional": ["trial", "location_id"],
      "key_fields": ["order_id", "subscriber_id"],
      "field_types": {"order_id": "string", "subscriber_id": "string", "status": "string", "trial": "bool", "location_id": "string", "event_date": "date"}
    },
    "provisioning_event": {
      "required": ["order_id", "circuit_id", "event_date"],
      "optional": ["location_id"],
      "key_fields": ["order_id", "circuit_id", "account_id"],
      "field_types": {"order_id": "string", "circuit_id": "string", "account_id": "string", "location_id": "string", "event_date": "date"},
      "patterns": {"circuit_id": "^[0-9]{10}$", "account_id": "^[A-Z]{2}[0-9]{10}$"}
    },
    "invoice_line": {
      "required": ["invoice_id", "account_id", "amount", "event_date"],
      "optional": ["subscriber_id", "location_id"],
      "key_fields": ["invoice_id", "account_id"],
      "field_types": {"invoice_id": "string", "account_id": "string", "subscriber_id": "string", "amount": "number", "location_id": "string", "event_date": "date"},
      "patterns": {"account_id": "^[A-Z]{2}[0-9]{10}$"}
    },
    "payment_settlement": {
      "required": ["payment_ref", "invoice_id", "amount", "event_date"],
      "optional": [],
      "key_fields": ["payment_ref", "invoice_id"],
      "field_types": {"payment_ref": "string", "invoice_id": "string", "amount": "number", "event_date": "date"}
    },
    "purchase_order": {
      "required": ["po_id", "material_code", "quantity", "amount", "event_date"],
      "optional": ["location_id"],
      "key_fields": ["po_id", "material_code"],
      "field_types": {"po_id": "string", "material_code": "string", "quantity": "number", "amount": "number", "location_id": "string", "event_date": "date"}
    },
    "receiving": {
      "required": ["po_id", "material_code", "location_id", "quantity", "event_date"],
      "optional": ["receipt_no"],
      "key_fields": ["po_id", "material_code", "location_id"],
      "field_types": {"po_id": "string", "material_code": "string", "location_id": "string", "quantity": "number", "receipt_no": "string", "event_date": "date"}
    },
    "issuance": {
      "required": ["po_id", "material_code", "location_id", "quantity", "event_date"],
      "optional": ["issue_no"],
      "key_fields": ["po_id", "material_code", "location_id"],
      "field_types": {"po_id": "string", "material_code": "string", "location_id": "string", "quantity": "number", "issue_no": "string", "event_date": "date"}
    },
    "installation": {
      "required": ["po_id", "material_code", "location_id", "quantity", "event_date"],
      "optional": [],
      "key_fields": ["po_id", "material_code", "location_id"],
      "field_types": {"po_id": "string", "material_code": "string", "location_id": "string", "quantity": "number", "event_date": "date"}
    },
    "inventory_movement": {
      "required": ["material_code", "location_id", "movement_type", "quantity", "event_date"],
      "optional": [],
      "key_fields": ["material_code", "location_id", "movement_type"],
      "field_types": {"material_code": "string", "location_id": "string", "movement_type": "string", "quantity": "number", "event_date": "date"}
    }
  }
})";

const char* kAssertionsJson = R"({
  "entities": {
    "service_order": [
      {"assert": "accepted_values", "field": "status", "values": ["active", "trial", "pending", "suspended", "cancelled"]}
    ],
    "invoice_line": [
      {"assert": "accepted_range", "field": "amount", "min": 0, "max": 1000000000}
    ],
    "payment_settlement": [
      {"assert": "accepted_range", "field": "amount", "min": 0, "max": 1000000000}
    ],
    "purchase_order": [
      {"assert": "accepted_range", "field": "quantity", "min": 0, "max": 1000000},
      {"assert": "accepted_range", "field": "amount", "min": 0, "max": 1000000000}
    ],
    "receiving": [
      {"assert": "accepted_range", "field": "quantity", "min": 0, "max": 1000000}
    ],
    "issuance": [
      {"assert": "accepted_range", "field": "quantity", "min": 0, "max": 1000000}
    ],
    "installation": [
      {"assert": "accepted_range", "field": "quantity", "min": 0, "max": 1000000}
    ],
    "inventory_movement": [
      {"assert": "accepted_range", "field": "quantity", "min": 0, "max": 1000000},
      {"assert": "accepted_values", "field": "movement_type", "values": ["receipt", "issue"]}
    ]
  }
})";

const char* kMatchspecsJson = R"({
  "escalation_days": 14,
  "matchspecs": [
    {
      "name": "order_to_provisioning",
      "left": "service_order",
      "right": "provisioning_event",
      "keys": ["order_id"],
      "window_days": 30,
      "flag_rule": "order with no provisioning event inside the activation window",
      "open_right_orphans": true
    },
    {
      "name": "invoice_to_payment",
      "left": "invoice_line",
      "right": "payment_settlement",
      "keys": ["invoice_id"],
      "window_days": 30,
      "flag_rule": "invoice unpaid past the settlement window",
      "open_right_orphans": false,
      "consistency_field": "amount"
    },
    {
      "name": "payment_to_invoice_orphan",
      "left": "payment_settlement",
      "right": "invoice_line",
      "keys": ["invoice_id"],
      "orphan_check": true,
      "flag_rule": "orphaned payment with no source invoice"
    },
    {
      "name": "issuance_to_installation",
      "left": "issuance",
      "right": "installation",
      "keys": ["po_id", "material_code"],
      "window_days": 30,
      "flag_rule": "material issued but not installed past threshold",
      "open_right_orphans": false
    },
    {
      "name": "activation_to_billing",
      "left": "provisioning_event",
      "right": "invoice_line",
      "keys": ["account_id"],
      "window_days": 30,
      "flag_rule": "active circuit with no billing record inside one billing cycle",
      "open_right_orphans": false
    }
  ]
})";

const char* kAnomalyJson = R"({
  "window_size": 30,
  "min_observations": 10,
  "z_threshold": 3.0,
  "mad_threshold": 3.5,
  "iqr_k": 1.5
})";

const char* kPoliciesJson = R"({
  "policies": [
    {"role": "admin", "object": "*", "territories": "*"},
    {"role": "finance_ops", "object": "*", "territories": "*"},
    {"role": "regional_ops_NW", "object": "*", "territory_field": "location_id", "territories": ["NW"]},
    {"role": "regional_ops_SW", "object": "*", "territory_field": "location_id", "territories": ["SW"]}
  ]
})";

const char* kCatalogJson = R"({
  "sources": {
    "activations": {"kind": "staged", "entity": "service_order"},
    "provisioning": {"kind": "staged", "entity": "provisioning_event"},
    "invoices": {"kind": "staged", "entity": "invoice_line"},
    "payments": {"kind": "staged", "entity": "payment_settlement"},
    "purchase_orders": {"kind": "staged", "entity": "purchase_order"},
    "receipts": {"kind": "staged", "entity": "receiving"},
    "issuances": {"kind": "staged", "entity": "issuance"},
    "installations": {"kind": "staged", "entity": "installation"},
    "lot_allocations": {
      "kind": "model",
      "fields": {"material_id": "string", "location_id": "string", "bucket": "string", "remaining_qty": "number", "snapshot_date": "date"}
    },
    "recon_status": {
      "kind": "model",
      "fields": {"match_spec": "string", "status": "string", "category": "string", "escalated": "bool", "location_id": "string"}
    },
    "exceptions": {
      "kind": "model",
      "fields": {"match_spec": "string", "category": "string", "status": "string", "escalated": "bool", "age_days": "number", "opened_as_of": "date", "owner": "string", "location_id": "string"}
    }
  }
})";

struct MetricFile {
    const char* name;
    const char* text;
};

const MetricFile kMetricFiles[] = {
    {"active_subscriber_count.metric",
     "metric active_subscriber_count {\n"
     "  source: activations;\n"
     "  filter: status = \"active\" and not trial;\n"
     "  agg: count_distinct(subscriber_id);\n"
     "}\n"},
    {"inventory_on_hand_by_aging_class.metric",
     "metric inventory_on_hand_by_aging_class {\n"
     "  source: lot_allocations;\n"
     "  agg: sum(remaining_qty);\n"
     "  grain: bucket;\n"
     "}\n"},
    {"billing_reconciliation_rate.metric",
     "metric billing_matched_count {\n"
     "  source: recon_status;\n"
     "  filter: match_spec = \"activation_to_billing\" and status = \"matched\";\n"
     "  agg: count;\n"
     "}\n"
     "\n"
     "metric billing_eligible_count {\n"
     "  source: recon_status;\n"
     "  filter: match_spec = \"activation_to_billing\" and status in (\"matched\", \"open\", \"matched_late\");\n"
     "  agg: count;\n"
     "}\n"
     "\n"
     "metric billing_reconciliation_rate {\n"
     "  source: recon_status;\n"
     "  agg: ratio(billing_matched_count, billing_eligible_count);\n"
     "}\n"},
    {"cost_per_passing.metric",
     "# unit-economics convention: spend is summed from purchase orders,\n"
     "# passings from installation confirmations\n"
     "metric construction_spend {\n"
     "  source: purchase_orders;\n"
     "  agg: sum(amount);\n"
     "}\n"
     "\n"
     "metric passings_completed {\n"
     "  source: installations;\n"
     "  agg: sum(quantity);\n"
     "}\n"
     "\n"
     "metric cost_per_passing {\n"
     "  source: purchase_orders;\n"
     "  agg: ratio(construction_spend, passings_completed);\n"
     "}\n"},
};

void write_if_absent(const fs::path& p, const std::string& content) {
    std::error_code ec;
    if (fs::exists(p, ec)) return;
    store::write_file_atomic(p, content);
}

}  // namespace

void materialize_defaults(const store::StoreRoot& root) {
    auto cfg = root.config_dir();
    write_if_absent(cfg / "normalization.json", kNormalizationJson);
    write_if_absent(cfg / "schemas.json", kSchemasJson);
    write_if_absent(cfg / "assertions.json", kAssertionsJson);
    write_if_absent(cfg / "matchspecs.json", kMatchspecsJson);
    write_if_absent(cfg / "anomaly.json", kAnomalyJson);
    write_if_absent(cfg / "policies.json", kPoliciesJson);
    write_if_absent(cfg / "catalog.json", kCatalogJson);
    fs::create_directories(cfg / "crosswalks");
    for (const auto& mf : kMetricFiles) {
        write_if_absent(root.metrics_dir() / mf.name, mf.text);
    }
}

EngineConfig load(const store::StoreRoot& root) {
    materialize_defaults(root);
    auto cfg = root.config_dir();

    EngineConfig ec;
    ec.rules = staging::NormalizationRuleSet::from_json(store::read_json(cfg / "normalization.json"));
    ec.schemas = staging::SchemaCatalog::from_json(store::read_json(cfg / "schemas.json"));
    ec.assertions = staging::QualityAssertionSet::from_json(store::read_json(cfg / "assertions.json"));

    auto crosswalk_dir = cfg / "crosswalks";
    if (fs::exists(crosswalk_dir)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(crosswalk_dir)) {
            if (entry.path().extension() == ".json") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            auto content = store::read_file(f);
            auto cw = staging::Crosswalk::from_json(Json::parse(content), sha256_hex(content));
            ec.crosswalks[cw.name] = std::move(cw);
        }
    }

    auto match_json = store::read_json(cfg / "matchspecs.json");
    ec.escalation_days = match_json.value("escalation_days", 14);
    for (const auto& mj : match_json.at("matchspecs")) {
        ec.matchspecs.push_back(recon::MatchSpec::from_json(mj));
    }
    std::sort(ec.matchspecs.begin(), ec.matchspecs.end(),
              [](const recon::MatchSpec& a, const recon::MatchSpec& b) { return a.name < b.name; });
    for (const auto& spec : ec.matchspecs) {
        for (const auto& side : {spec.left_entity, spec.right_entity}) {
            if (!ec.schemas.entities.count(side)) {
                throw ConfigError("matchspec " + spec.name + " references unknown entity \"" +
                                  side + "\"");
            }
        }
        for (const auto& key : spec.keys) {
            for (const auto& side : {spec.left_entity, spec.right_entity}) {
                const auto& schema = ec.schemas.entities.at(side);
                if (!schema.field_types.count(key)) {
                    throw ConfigError("matchspec " + spec.name + ": join key \"" + key +
                                      "\" is not a field of " + side);
                }
            }
        }
    }

    ec.anomaly = inventory::DetectorParams::from_json(store::read_json(cfg / "anomaly.json"));
    ec.catalog = semantic::SourceCatalog::from_json(store::read_json(cfg / "catalog.json"),
                                                    ec.schemas);

    std::vector<semantic::MetricDefinition> defs;
    if (fs::exists(root.metrics_dir())) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(root.metrics_dir())) {
            if (entry.path().extension() == ".metric") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            auto parsed = semantic::parse_metrics(store::read_file(f), f.filename().string());
            for (auto& d : parsed) defs.push_back(std::move(d));
        }
    }
    ec.registry = semantic::Registry::validate(std::move(defs), ec.catalog);

    std::set<std::string> policy_objects;
    for (const auto& name : ec.registry.names()) policy_objects.insert(name);
    for (const auto& [name, src] : ec.catalog.sources) policy_objects.insert(name);
    ec.policies = governance::PolicySet::from_json(store::read_json(cfg / "policies.json"),
                                                   policy_objects);

    ec.ingest_date_formats = {"YYYY-MM-DD", "MM/DD/YYYY"};
    return ec;
}

}  // namespace gera::config
