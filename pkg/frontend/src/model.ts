/** Shapes of the control-API JSON payloads, mirrored one-to-one.
 *
 * The panel is stateless relative to the gateway: everything it shows is
 * reproducible from these responses, so the types here are the whole data
 * model. Unsaved edits live in the policy editor, nowhere else.
 */

export type ModeValue = "opportunistic" | "strict";
export type ModeOrigin = "global" | "user" | "header";

export interface GlobalModeInfo {
  scope: "global";
  value: ModeValue;
}

export interface HostModeInfo {
  scope: "host";
  host: string;
  value: ModeValue;
  origin: ModeOrigin;
  expires_at?: number;
}

export type ModeInfo = GlobalModeInfo | HostModeInfo;

export type Indicator = "all" | "some" | "none";

export interface PageReport {
  page_id: string;
  total: number;
  via_pan: number;
  via_legacy: number;
  blocked: number;
  non_compliant: number;
  indicator: Indicator;
}

export interface PathEntry {
  fingerprint: string;
  hops: string[];
  latency_ms: number;
  bandwidth_mbps: number;
  mtu_bytes: number;
  carbon_g_per_gb: number;
  hop_count: number;
  isds: number[];
  compliant: boolean;
  chosen: boolean;
}

export interface PathsReport {
  host: string;
  scion_capable: boolean;
  source: string;
  address: string | null;
  error: string | null;
  mode: { value: ModeValue; origin: ModeOrigin };
  paths: PathEntry[];
}

export interface HostCounters {
  requests_pan: number;
  requests_legacy: number;
  requests_blocked: number;
  non_compliant: number;
}

export interface PathCounters {
  hops: string;
  uses: number;
  ewma_latency_ms: number;
  bytes: number;
}

export interface StatsSnapshot {
  since: number;
  records: number;
  per_host: Record<string, HostCounters>;
  per_path: Record<string, PathCounters>;
}

/** Seconds left on a header-imposed strict entry, rendered for a countdown.
 *
 * expires_at is the gateway's clock, not ours; the caller passes a matching
 * "now". Never goes negative: an expired entry reads "0s".
 */
export function formatExpiry(expiresAt: number, now: number): string {
  const left = Math.max(0, Math.ceil(expiresAt - now));
  return `${left}s`;
}

/** ISDs worth offering as toggles: whatever the gateway has shown us.
 *
 * Union of the ISDs on any reported path, any `<isd>-<as>` hop mentioned in
 * the stats, and the ISDs already denied, over a small default range so the
 * grid is never empty on a fresh gateway.
 */
export function observedIsds(
  denied: number[],
  paths: PathsReport | null,
  stats: StatsSnapshot | null,
): number[] {
  const seen = new Set<number>([1, 2, 3]);
  for (const isd of denied) seen.add(isd);
  if (paths) {
    for (const p of paths.paths) for (const isd of p.isds) seen.add(isd);
  }
  if (stats) {
    for (const c of Object.values(stats.per_path)) {
      for (const hop of c.hops.split(">")) {
        const isd = parseInt(hop.split("-")[0], 10);
        if (!Number.isNaN(isd)) seen.add(isd);
      }
    }
  }
  return [...seen].sort((a, b) => a - b);
}
