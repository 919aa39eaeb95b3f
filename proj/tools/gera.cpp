// gera: reconciliation engine command line
//
// exit codes: 0 success, 1 validation error, 2 integrity error

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gera/common.hpp"
#include "gera/config_defaults.hpp"
#include "gera/ingest.hpp"
#include "gera/pipeline.hpp"
#include "gera/store.hpp"
#include "gera/synth.hpp"

namespace {

using namespace gera;

std::string resolve_store(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("GERA_STORE")) return env;
    throw ValidationError("no store root: pass --store or set GERA_STORE");
}

Date parse_as_of(const std::string& s) { return Date::parse_iso_or_throw(s); }

governance::Principal make_principal(const std::string& role,
                                     const std::vector<std::string>& territories) {
    return governance::Principal{role, territories};
}

void print_json_or(const Json& j, bool json_mode, const std::string& text) {
    if (json_mode) {
        std::cout << j.dump() << "\n";
    } else {
        std::cout << text;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gera: governed cross-system reconciliation engine"};
    app.require_subcommand(1);

    std::string store_flag;
    app.add_option("--store", store_flag, "store root directory (or env GERA_STORE)");

    // init
    auto* init_cmd = app.add_subcommand("init", "materialize default configuration in the store");

    // ingest
    std::string ing_source, ing_entity, ing_as_of, ing_file;
    auto* ingest_cmd = app.add_subcommand("ingest", "load a source extract into the raw store");
    ingest_cmd->add_option("--source", ing_source, "source system id")->required();
    ingest_cmd->add_option("--entity", ing_entity, "entity kind")->required();
    ingest_cmd->add_option("--as-of", ing_as_of, "logical load date (YYYY-MM-DD)")->required();
    ingest_cmd->add_option("file", ing_file, "CSV or NDJSON extract")->required();

    // run
    std::string run_as_of;
    int run_lookback = 35;
    auto* run_cmd = app.add_subcommand("run", "stage, reconcile, snapshot, detect, and age");
    run_cmd->add_option("--as-of", run_as_of, "run date")->required();
    run_cmd->add_option("--lookback", run_lookback, "first-run backfill bound in days");

    // recon report
    auto* recon_cmd = app.add_subcommand("recon", "reconciliation reports");
    auto* recon_report_cmd = recon_cmd->add_subcommand("report", "per-spec reconciliation report");
    std::string rr_as_of, rr_role = "admin";
    bool rr_json = false;
    recon_report_cmd->add_option("--as-of", rr_as_of)->required();
    recon_report_cmd->add_option("--role", rr_role, "principal role");
    recon_report_cmd->add_flag("--json", rr_json);

    // exceptions
    auto* exc_cmd = app.add_subcommand("exceptions", "exception queue");
    auto* exc_list = exc_cmd->add_subcommand("list", "list exceptions");
    std::string el_as_of, el_role = "admin";
    bool el_json = false;
    exc_list->add_option("--as-of", el_as_of)->required();
    exc_list->add_option("--role", el_role);
    exc_list->add_flag("--json", el_json);
    auto* exc_resolve = exc_cmd->add_subcommand("resolve", "manually resolve an exception");
    std::string er_id, er_note, er_owner, er_as_of;
    exc_resolve->add_option("--id", er_id)->required();
    exc_resolve->add_option("--note", er_note)->required();
    exc_resolve->add_option("--owner", er_owner)->required();
    exc_resolve->add_option("--as-of", er_as_of)->required();
    auto* exc_assign = exc_cmd->add_subcommand("assign", "assign an exception owner");
    std::string ea_id, ea_owner, ea_as_of;
    exc_assign->add_option("--id", ea_id)->required();
    exc_assign->add_option("--owner", ea_owner)->required();
    exc_assign->add_option("--as-of", ea_as_of)->required();

    // inventory
    auto* inv_cmd = app.add_subcommand("inventory", "inventory aging and anomaly flags");
    auto* inv_aging = inv_cmd->add_subcommand("aging", "FIFO aging report");
    std::string ia_as_of, ia_role = "admin";
    bool ia_json = false;
    inv_aging->add_option("--as-of", ia_as_of)->required();
    inv_aging->add_option("--role", ia_role);
    inv_aging->add_flag("--json", ia_json);
    auto* inv_flags = inv_cmd->add_subcommand("flags", "anomaly investigation queue");
    std::string if_as_of, if_role = "admin";
    bool if_json = false;
    inv_flags->add_option("--as-of", if_as_of)->required();
    inv_flags->add_option("--role", if_role);
    inv_flags->add_flag("--json", if_json);
    auto* inv_dispo = inv_cmd->add_subcommand("disposition", "set a flag disposition");
    std::string id_flag, id_dispo, id_note, id_as_of;
    inv_dispo->add_option("--flag-id", id_flag)->required();
    inv_dispo->add_option("--disposition", id_dispo, "confirmed | false_positive")->required();
    inv_dispo->add_option("--note", id_note);
    inv_dispo->add_option("--as-of", id_as_of)->required();

    // metric
    auto* metric_cmd = app.add_subcommand("metric", "governed metric evaluation");
    auto* metric_eval = metric_cmd->add_subcommand("eval", "evaluate one metric");
    std::string me_name, me_as_of, me_role;
    std::vector<std::string> me_territories;
    bool me_json = false;
    metric_eval->add_option("name", me_name)->required();
    metric_eval->add_option("--as-of", me_as_of)->required();
    metric_eval->add_option("--role", me_role)->required();
    metric_eval->add_option("--territory", me_territories, "asserted territory attributes");
    metric_eval->add_flag("--json", me_json);
    auto* metric_report = metric_cmd->add_subcommand("report", "evaluate every registry metric");
    std::string mr_as_of, mr_role;
    std::vector<std::string> mr_territories;
    bool mr_json = false;
    metric_report->add_option("--as-of", mr_as_of)->required();
    metric_report->add_option("--role", mr_role)->required();
    metric_report->add_option("--territory", mr_territories);
    metric_report->add_flag("--json", mr_json);

    // audit
    auto* audit_cmd = app.add_subcommand("audit", "audit log operations");
    auto* audit_verify = audit_cmd->add_subcommand("verify", "recompute the hash chain");
    auto* audit_compact = audit_cmd->add_subcommand("compact", "retention compaction");
    int ac_retention = 365;
    std::string ac_as_of;
    audit_compact->add_option("--retention-days", ac_retention);
    audit_compact->add_option("--as-of", ac_as_of)->required();

    // store verify
    auto* store_cmd = app.add_subcommand("store", "raw store operations");
    auto* store_verify = store_cmd->add_subcommand("verify", "verify partition digests");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "synthetic scenario generator");
    auto* synth_gen = synth_cmd->add_subcommand("generate", "generate a scenario");
    std::string sg_config, sg_out;
    synth_gen->add_option("--config", sg_config)->required();
    synth_gen->add_option("--out", sg_out)->required();
    auto* synth_score = synth_cmd->add_subcommand("score", "score engine output against a manifest");
    std::string ss_manifest, ss_as_of;
    synth_score->add_option("--manifest", ss_manifest)->required();
    synth_score->add_option("--as-of", ss_as_of)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_gen->parsed()) {
            // generation does not need a store
            auto cfg = synth::ScenarioConfig::from_json(store::read_json(sg_config));
            auto scenario = synth::generate(cfg, sg_out);
            std::cout << "generated " << scenario.files.size() << " files under " << sg_out
                      << "\nmanifest: " << scenario.manifest_path.string()
                      << "\ncrosswalk: " << scenario.crosswalk_path.string() << "\n";
            return 0;
        }

        store::StoreRoot root{resolve_store(store_flag)};

        if (init_cmd->parsed()) {
            config::materialize_defaults(root);
            std::cout << "store initialized at " << root.path().string() << "\n";
            return 0;
        }
        if (ingest_cmd->parsed()) {
            ingest::RawStore raw(root);
            auto receipt = raw.load_batch(ing_file, ing_source, ing_entity,
                                          parse_as_of(ing_as_of));
            if (receipt.duplicate_of) {
                std::cout << "duplicate of batch " << *receipt.duplicate_of
                          << "; nothing written\n";
            } else {
                std::cout << "loaded " << receipt.records_written << " records into "
                          << receipt.source_id << "/" << receipt.as_of.to_string() << " (batch "
                          << receipt.batch_hash.substr(0, 16) << ")\n";
            }
            return 0;
        }
        if (run_cmd->parsed()) {
            pipeline::Engine engine(root);
            auto summary = engine.run(parse_as_of(run_as_of), run_lookback);
            std::cout << "run complete through " << summary.as_of.to_string() << ": "
                      << summary.days_processed << " day(s), " << summary.batches_staged
                      << " batch(es), " << summary.records_pass << " pass / "
                      << summary.records_quarantined << " quarantined, "
                      << summary.exceptions_opened << " exception(s) opened, "
                      << summary.exceptions_resolved << " resolved, " << summary.flags_raised
                      << " flag(s)\n";
            return 0;
        }
        if (recon_report_cmd->parsed()) {
            pipeline::Engine engine(root);
            auto report = engine.recon_report_governed(parse_as_of(rr_as_of),
                                                       make_principal(rr_role, {}));
            print_json_or(report, rr_json, pipeline::Engine::recon_report_text(report));
            return 0;
        }
        if (exc_list->parsed()) {
            pipeline::Engine engine(root);
            auto out = engine.exceptions_list(parse_as_of(el_as_of), make_principal(el_role, {}));
            if (el_json) {
                std::cout << out.dump() << "\n";
            } else {
                std::cout << "exceptions as_of " << out.at("as_of").get<std::string>() << ":\n";
                for (const auto& e : out.at("exceptions")) {
                    std::cout << "  " << e.at("exception_id").get<std::string>() << "  "
                              << e.at("match_spec").get<std::string>() << "  "
                              << e.at("category").get<std::string>() << "  "
                              << e.at("status").get<std::string>() << "  age="
                              << e.at("age_days").get<std::int64_t>()
                              << (e.at("escalated").get<bool>() ? "  ESCALATED" : "") << "\n";
                }
            }
            return 0;
        }
        if (exc_resolve->parsed()) {
            pipeline::Engine engine(root);
            engine.exception_resolve(er_id, er_note, er_owner, parse_as_of(er_as_of));
            std::cout << "exception " << er_id << " resolved manually\n";
            return 0;
        }
        if (exc_assign->parsed()) {
            pipeline::Engine engine(root);
            engine.exception_assign(ea_id, ea_owner, parse_as_of(ea_as_of));
            std::cout << "exception " << ea_id << " assigned to " << ea_owner << "\n";
            return 0;
        }
        if (inv_aging->parsed()) {
            pipeline::Engine engine(root);
            auto report = engine.aging_report_governed(parse_as_of(ia_as_of),
                                                       make_principal(ia_role, {}));
            print_json_or(report, ia_json, pipeline::Engine::aging_report_text(report));
            return 0;
        }
        if (inv_flags->parsed()) {
            pipeline::Engine engine(root);
            auto out = engine.flags_list(parse_as_of(if_as_of), make_principal(if_role, {}));
            if (if_json) {
                std::cout << out.dump() << "\n";
            } else {
                std::cout << "investigation queue as_of " << out.at("as_of").get<std::string>()
                          << ":\n";
                for (const auto& q : out.at("queue")) {
                    std::cout << "  " << q.at("material_id").get<std::string>() << " @ "
                              << q.at("location_id").get<std::string>() << "  "
                              << q.at("snapshot_date").get<std::string>() << "  observed="
                              << q.at("observed").get<double>() << "  methods=";
                    bool first = true;
                    for (const auto& m : q.at("methods")) {
                        if (!first) std::cout << ",";
                        std::cout << m.at("method").get<std::string>();
                        first = false;
                    }
                    std::cout << "\n";
                }
            }
            return 0;
        }
        if (inv_dispo->parsed()) {
            pipeline::Engine engine(root);
            engine.flag_disposition(id_flag, id_dispo, id_note, parse_as_of(id_as_of));
            std::cout << "flag " << id_flag << " -> " << id_dispo << "\n";
            return 0;
        }
        if (metric_eval->parsed()) {
            pipeline::Engine engine(root);
            auto result = engine.metric_eval(me_name, parse_as_of(me_as_of),
                                             make_principal(me_role, me_territories));
            if (me_json) {
                std::cout << result.dump() << "\n";
            } else {
                std::cout << me_name << " @ " << result.at("as_of").get<std::string>() << " = "
                          << result.at("value").dump() << "\n";
                if (result.contains("groups")) {
                    for (const auto& g : result.at("groups")) {
                        std::cout << "  " << g.at("key").dump() << " = "
                                  << g.at("value").dump() << "\n";
                    }
                }
            }
            return 0;
        }
        if (metric_report->parsed()) {
            pipeline::Engine engine(root);
            auto results = engine.metrics_report(parse_as_of(mr_as_of),
                                                 make_principal(mr_role, mr_territories));
            for (const auto& r : results) {
                if (mr_json) {
                    std::cout << r.dump() << "\n";
                } else {
                    std::cout << r.at("metric").get<std::string>() << " = "
                              << r.at("value").dump() << "\n";
                }
            }
            return 0;
        }
        if (audit_verify->parsed()) {
            governance::AuditLog log(root.audit_log(), root.audit_manifest());
            auto result = log.verify();
            if (result.ok) {
                std::cout << "audit chain ok (" << log.events().size() << " events)\n";
                return 0;
            }
            std::cout << "audit chain BROKEN: " << result.detail << "\n";
            return 2;
        }
        if (audit_compact->parsed()) {
            governance::AuditLog log(root.audit_log(), root.audit_manifest());
            auto summary = log.retention_compact(ac_retention, parse_as_of(ac_as_of));
            std::cout << "compacted: removed " << summary.removed << ", retained "
                      << summary.retained
                      << (summary.tombstone_written ? " (tombstone written)" : " (no-op)")
                      << "\n";
            return 0;
        }
        if (store_verify->parsed()) {
            ingest::RawStore raw(root);
            auto report = raw.verify();
            if (report.ok()) {
                std::cout << "raw store ok (" << report.partitions_checked << " partitions)\n";
                return 0;
            }
            for (const auto& m : report.mismatches) {
                std::cout << "INTEGRITY: partition " << m.partition << " file " << m.file << ": "
                          << m.detail << "\n";
            }
            return 2;
        }
        if (synth_score->parsed()) {
            auto manifest = store::read_json(ss_manifest);
            auto scores = synth::score(root, manifest, parse_as_of(ss_as_of));
            std::cout << scores.dump(2) << "\n";
            return 0;
        }
    } catch (const IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
