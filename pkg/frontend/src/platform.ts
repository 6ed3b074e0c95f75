/**
 * Execution handle over `dramlab run`. Each execute() call spawns one CLI
 * process; the run report crosses back as the CLI's JSON mapping (keys kept
 * verbatim) and readback data as a binary file of 64-byte transfers that
 * receiveData() then serves out in FIFO order.
 *
 * Handles hold plain cursor state and are not safe to share across threads.
 */

import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { runCli } from "./cli.js";
import { Program } from "./program.js";

/** One readback transfer is 512 bits on the wire. */
export const TRANSFER_BYTES = 64;

export interface RunReport {
  cycles: number;
  bus_slots: number;
  wall_slots: number;
  histogram: Record<string, number>;
  timing_violations: number;
  state_violations: number;
  fifo_high_water: number;
  stall_cycles: number;
  transfers: number;
  flips: number;
  trap: { kind: string; detail: string; pc: number } | null;
  halted: boolean;
  max_cycles_exceeded: boolean;
  perf: Record<string, number>;
  injected: number;
}

export interface ExecuteOptions {
  maxCycles?: number;
  refresh?: "on" | "off";
}

export class Platform {
  private profile: string | Record<string, unknown> = "ddr4_default";
  private data: Uint8Array = new Uint8Array(0);
  private cursor = 0;

  /** Select the device profile: a shipped name, a JSON file path, or a config object. */
  initialize(profile: string | Record<string, unknown>): this {
    this.profile = profile;
    return this;
  }

  /** Run a program image (or an unassembled Program) and return its report. */
  execute(program: Program | Uint8Array, opts: ExecuteOptions = {}): RunReport {
    const image = program instanceof Program ? program.assemble().image : program;
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), "dramlab-"));
    try {
      const binPath = path.join(dir, "program.bin");
      const reportPath = path.join(dir, "report.json");
      const dataPath = path.join(dir, "data.bin");
      fs.writeFileSync(binPath, image);
      const args = [
        "run", binPath,
        "--profile", this.profilePath(dir),
        "--report-json", reportPath,
        "--data", dataPath,
      ];
      if (opts.maxCycles !== undefined) {
        args.push("--max-cycles", String(opts.maxCycles));
      }
      if (opts.refresh !== undefined) {
        args.push("--refresh", opts.refresh);
      }
      runCli(args);
      const report = JSON.parse(fs.readFileSync(reportPath, "utf-8")) as RunReport;
      this.data = new Uint8Array(fs.readFileSync(dataPath));
      this.cursor = 0;
      return report;
    } finally {
      fs.rmSync(dir, { recursive: true, force: true });
    }
  }

  /** Next n readback transfers (64 bytes each) in arrival order; short when drained. */
  receiveData(nTransfers: number): Uint8Array {
    const start = this.cursor;
    const end = Math.min(start + nTransfers * TRANSFER_BYTES, this.data.length);
    this.cursor = end;
    return this.data.slice(start, end);
  }

  private profilePath(dir: string): string {
    if (typeof this.profile === "string") {
      return this.profile;
    }
    const profilePath = path.join(dir, "profile.json");
    fs.writeFileSync(profilePath, JSON.stringify(this.profile));
    return profilePath;
  }
}
