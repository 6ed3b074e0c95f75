/**
 * Process-boundary plumbing: every operation in this package is carried out
 * by spawning the `dramlab` command-line tool and exchanging files with it.
 * No simulator logic lives on this side.
 */

import { spawnSync } from "node:child_process";

/** Raised when the CLI exits non-zero; `code` carries its machine-readable error code. */
export class CliError extends Error {
  readonly code: string;

  constructor(code: string, message: string) {
    super(message);
    this.name = "CliError";
    this.code = code;
  }
}

/** Resolve the CLI binary; DRAMLAB_BIN overrides for test harnesses. */
export function cliBinary(): string {
  return process.env["DRAMLAB_BIN"] ?? "dramlab";
}

/**
 * Run one dramlab subcommand. On failure the last stderr line is parsed as
 * the CLI's JSON error record and rethrown as a CliError so callers can
 * switch on the same error codes the CLI reports.
 */
export function runCli(args: string[]): string {
  const proc = spawnSync(cliBinary(), args, { encoding: "utf-8" });
  if (proc.error) {
    throw new CliError(proc.error.name, `failed to launch ${cliBinary()}: ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    const lines = (proc.stderr ?? "").trim().split("\n");
    const last = lines[lines.length - 1] ?? "";
    try {
      const record = JSON.parse(last) as { error: string; message: string };
      throw new CliError(record.error, record.message);
    } catch (err) {
      if (err instanceof CliError) {
        throw err;
      }
      throw new CliError("CliFailure", `dramlab exited with status ${proc.status}: ${last}`);
    }
  }
  return proc.stdout ?? "";
}

/** Version string reported by the CLI itself. */
export function cliVersion(): string {
  return runCli(["version"]).trim();
}
