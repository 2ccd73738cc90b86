/** Thin typed client for the gateway control API.
 *
 * Every call goes to the same origin the panel was served from (the
 * control listener), so `base` is normally "". Failures become ApiError:
 * status 0 means the gateway is unreachable, anything else carries the
 * server's own error text (e.g. the line-numbered 422 from a policy PUT).
 */

import type { ModeInfo, PageReport, PathsReport, StatsSnapshot } from "./model.js";

export class ApiError extends Error {
  readonly status: number;
  readonly body: string;

  constructor(status: number, body: string) {
    super(status === 0 ? `gateway unreachable: ${body}` : `HTTP ${status}: ${body}`);
    this.name = "ApiError";
    this.status = status;
    this.body = body;
  }

  get unreachable(): boolean {
    return this.status === 0;
  }
}

async function call(
  base: string,
  method: string,
  path: string,
  body?: string,
): Promise<string> {
  let resp: Response;
  try {
    resp = await fetch(base + path, {
      method,
      body,
      headers: body === undefined ? undefined : { "Content-Type": "text/plain" },
    });
  } catch (e) {
    throw new ApiError(0, e instanceof Error ? e.message : String(e));
  }
  const text = await resp.text();
  if (!resp.ok) throw new ApiError(resp.status, text.trim());
  return text;
}

async function getJson<T>(base: string, path: string): Promise<T> {
  return JSON.parse(await call(base, "GET", path)) as T;
}

export function getPolicy(base: string): Promise<string> {
  return call(base, "GET", "/api/policy");
}

export async function putPolicy(base: string, text: string): Promise<void> {
  await call(base, "PUT", "/api/policy", text);
}

export function getMode(base: string, host?: string): Promise<ModeInfo> {
  const q = host ? `?host=${encodeURIComponent(host)}` : "";
  return getJson<ModeInfo>(base, `/api/mode${q}`);
}

export async function putMode(base: string, value: string, host?: string): Promise<void> {
  const q = host ? `?host=${encodeURIComponent(host)}` : "";
  await call(base, "PUT", `/api/mode${q}`, value);
}

export function getStatus(base: string, page: string): Promise<PageReport> {
  return getJson<PageReport>(base, `/api/status?page=${encodeURIComponent(page)}`);
}

export async function getPages(base: string): Promise<string[]> {
  const doc = await getJson<{ pages: string[] }>(base, "/api/pages");
  return doc.pages;
}

export function getStats(base: string): Promise<StatsSnapshot> {
  return getJson<StatsSnapshot>(base, "/api/stats");
}

export function getPaths(base: string, host: string): Promise<PathsReport> {
  return getJson<PathsReport>(base, `/api/paths?host=${encodeURIComponent(host)}`);
}
