/** The three-state coverage badge and shared HTML helpers. */

import type { PageReport } from "./model.js";

export interface BadgeModel {
  state: "all" | "some" | "none";
  label: string;
  detail: string;
  warning: string | null;
}

const LABELS = {
  all: "All traffic path-aware",
  some: "Partially path-aware",
  none: "No path-aware traffic",
} as const;

/** Badge for a page report; null (page never seen) renders as none. */
export function badgeFor(report: PageReport | null): BadgeModel {
  if (report === null || report.total === 0) {
    return {
      state: "none",
      label: LABELS.none,
      detail: "no requests observed",
      warning: null,
    };
  }
  const detail =
    `${report.via_pan} PAN / ${report.via_legacy} legacy / ` +
    `${report.blocked} blocked of ${report.total}`;
  const warning =
    report.non_compliant > 0
      ? `${report.non_compliant} request${report.non_compliant === 1 ? "" : "s"} ` +
        "used a fallback that does not satisfy the policy"
      : null;
  return { state: report.indicator, label: LABELS[report.indicator], detail, warning };
}

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function badgeHtml(model: BadgeModel): string {
  const warn = model.warning
    ? `<p class="badge-warning">&#9888; ${escapeHtml(model.warning)}</p>`
    : "";
  return (
    `<div class="badge badge-${model.state}">` +
    `<span class="badge-state">${model.state}</span>` +
    `<span class="badge-label">${escapeHtml(model.label)}</span>` +
    `<span class="badge-detail">${escapeHtml(model.detail)}</span>` +
    `</div>${warn}`
  );
}
