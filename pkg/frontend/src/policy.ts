/** The two edit surfaces for the gateway policy.
 *
 * The toggle view understands exactly one policy shape: a run of whole-ISD
 * denials, then the allow-everything default, then optional ordering lines:
 *
 *     - 3-0
 *     - 5-0
 *     + 0-0
 *     order latency asc
 *
 * Anything else (AS-level rules, allow-before-deny, multiple defaults) is
 * still a valid gateway policy but only editable as raw text. Switching
 * surfaces while dirty loses edits, so the app asks first.
 */

export interface ToggleView {
  kind: "toggles";
  denied: number[];
  orders: string[];
}

export interface RawView {
  kind: "raw";
}

export type PolicySurface = ToggleView | RawView;

const DENY_ISD = /^-\s+(\d+)-0$/;
const ALLOW_ALL = /^\+\s+0-0$/;
const ORDER = /^order\s+\S+\s+(asc|desc)$/;

/** Decide whether a policy text is representable as ISD toggles. */
export function analyzePolicy(text: string): PolicySurface {
  const denied = new Set<number>();
  const orders: string[] = [];
  // 0 = reading denials, 1 = saw the allow-all, 2 = reading order lines
  let stage = 0;
  for (const rawLine of text.split("\n")) {
    const line = rawLine.trim();
    if (!line || line.startsWith("#")) continue;
    const deny = line.match(DENY_ISD);
    if (deny && stage === 0) {
      denied.add(parseInt(deny[1], 10));
      continue;
    }
    if (ALLOW_ALL.test(line) && stage === 0) {
      stage = 1;
      continue;
    }
    if (ORDER.test(line) && stage >= 1) {
      stage = 2;
      orders.push(line);
      continue;
    }
    return { kind: "raw" };
  }
  if (stage === 0) return { kind: "raw" }; // no allow-all default seen
  return { kind: "toggles", denied: [...denied].sort((a, b) => a - b), orders };
}

/** Render toggles back to policy text in the canonical shape above. */
export function renderToggleText(denied: number[], orders: string[]): string {
  const lines = [...new Set(denied)]
    .sort((a, b) => a - b)
    .map((isd) => `- ${isd}-0`);
  lines.push("+ 0-0");
  lines.push(...orders);
  return lines.join("\n") + "\n";
}

export function setDenied(view: ToggleView, isd: number, deny: boolean): ToggleView {
  const denied = new Set(view.denied);
  if (deny) denied.add(isd);
  else denied.delete(isd);
  return { ...view, denied: [...denied].sort((a, b) => a - b) };
}

export function isDenied(view: ToggleView, isd: number): boolean {
  return view.denied.includes(isd);
}
