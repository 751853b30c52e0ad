/**
 * DOM wiring. All state lives in state.ts reducers fed by gateway
 * responses; this file only renders and forwards clicks.
 */

import { GatewayClient } from "./api.js";
import type { RequestView, SmfAlertView } from "./api.js";
import { openStream } from "./sse.js";
import type { StreamHandle } from "./sse.js";
import {
  QueueState, ageSeconds, emptyQueue, grantBadge, markDisconnected,
  reduceQueue, renderDecision, trackRequests,
} from "./state.js";

const gateway = new GatewayClient(window.location.origin);

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

function show(id: string, visible: boolean): void {
  el(id).style.display = visible ? "" : "none";
}

// ---------------------------------------------------------------- login

async function onLogin(event: Event): Promise<void> {
  event.preventDefault();
  const id = el<HTMLInputElement>("login-id").value.trim();
  const secret = el<HTMLInputElement>("login-secret").value;
  const result = await gateway.login(id, secret);
  if (!result.body) {
    el("login-error").textContent =
      result.error ? `${result.error.code}: ${result.error.message}` : "failed";
    return;
  }
  show("login-panel", false);
  el("who").textContent =
    `${result.body.principal.display_name} (${result.body.principal.kind})`;
  if (result.body.principal.kind === "super_user") {
    show("approver-panel", true);
    startApproverView();
  } else {
    show("user-panel", true);
    startUserView();
  }
}

// ---------------------------------------------------------------- approver

let queue: QueueState = emptyQueue;
let stream: StreamHandle | null = null;
let serverNowUs = 0;

function renderQueue(): void {
  el("connection").textContent = queue.connected ? "live" : "reconnecting…";
  el("connection").className = queue.connected ? "ok" : "warn";
  const tbody = el<HTMLTableSectionElement>("queue-body");
  tbody.replaceChildren();
  for (const request of queue.pending) {
    const row = document.createElement("tr");
    const age = Math.floor(ageSeconds(request, serverNowUs));
    row.innerHTML =
      `<td>${request.user_id}</td><td>${request.patient_scope}</td>` +
      `<td>${request.purpose}</td><td>${age}s</td>`;
    const actions = document.createElement("td");
    for (const verdict of ["approve", "deny"] as const) {
      const button = document.createElement("button");
      button.textContent = verdict;
      button.className = verdict;
      button.onclick = () => decide(request, verdict);
      actions.append(button);
    }
    row.append(actions);
    tbody.append(row);
  }
  show("queue-empty", queue.pending.length === 0);
  const recent = el<HTMLUListElement>("recent");
  recent.replaceChildren();
  for (const request of queue.recentDecisions) {
    const item = document.createElement("li");
    const who = request.decider_id ? ` by ${request.decider_id}` : "";
    item.textContent =
      `${request.request_id} ${request.user_id}/${request.patient_scope}: ` +
      `${request.state}${who}`;
    recent.append(item);
  }
}

async function decide(request: RequestView, verdict: "approve" | "deny"):
    Promise<void> {
  const result = await gateway.decide(request.request_id, verdict);
  const rendered = renderDecision(result.status, result.body, result.error);
  el("decision-note").textContent =
    `${request.request_id}: ${rendered.message}`;
  el("decision-note").className = rendered.kind;
}

function startApproverView(): void {
  stream = openStream(window.location.origin, gateway.sessionToken!, {
    onEvent(event) {
      const payload = event.data as {
        alerts?: RequestView[];
        request?: RequestView;
        server_now_us?: number;
      };
      if (payload.server_now_us) serverNowUs = payload.server_now_us;
      queue = reduceQueue(queue, event.event, payload);
      renderQueue();
    },
    onStatus(connected) {
      queue = connected ? { ...queue, connected } : markDisconnected(queue);
      renderQueue();
    },
    onDenied(status) {
      el("decision-note").textContent = `event stream refused (${status})`;
    },
  });
  window.addEventListener("beforeunload", () => stream?.close());
  setInterval(() => {
    serverNowUs += 1_000_000;
    renderQueue();
  }, 1000);
  setInterval(refreshSmf, 15_000);
  void refreshSmf();
  el("mint-passcode").onclick = mintPasscode;
}

async function refreshSmf(): Promise<void> {
  const result = await gateway.smfAlerts();
  const list = el<HTMLUListElement>("smf-list");
  list.replaceChildren();
  for (const alert of result.body ?? ([] as SmfAlertView[])) {
    const item = document.createElement("li");
    item.className = alert.severity;
    item.textContent =
      `[${alert.severity}] ${alert.rule_id}: ${alert.involved.join(", ")} ` +
      `(${alert.evidence.length} events)`;
    list.append(item);
  }
  show("smf-empty", (result.body ?? []).length === 0);
}

async function mintPasscode(): Promise<void> {
  const result = await gateway.mintPasscode();
  el("passcode-out").textContent = result.body
    ? `code ${result.body.code} (valid 60 s, single use)`
    : `refused: ${result.error?.code}`;
}

// ---------------------------------------------------------------- user

let lastFetchMs = 0;
let lastMine: RequestView[] = [];

function renderTracker(): void {
  const tracked = trackRequests(lastMine, lastFetchMs, Date.now());
  const tbody = el<HTMLTableSectionElement>("tracker-body");
  tbody.replaceChildren();
  for (const grant of tracked) {
    const row = document.createElement("tr");
    const badge = grantBadge(grant);
    const status = grant.state === "denied" && grant.deciderId
      ? `denied by ${grant.deciderId}`
      : grant.state;
    row.innerHTML =
      `<td>${grant.requestId}</td><td>${grant.patient}</td>` +
      `<td>${grant.purpose}</td><td>${status}</td>` +
      `<td class="badge">${badge}</td>`;
    tbody.append(row);
  }
}

async function refreshTracker(): Promise<void> {
  const result = await gateway.myRequests();
  if (result.body) {
    lastMine = result.body;
    lastFetchMs = Date.now();
  }
  renderTracker();
}

async function onSubmitRequest(event: Event): Promise<void> {
  event.preventDefault();
  const patient = el<HTMLInputElement>("req-patient").value.trim();
  const purpose = el<HTMLSelectElement>("req-purpose").value;
  const result = await gateway.submitRequest(patient, purpose);
  el("submit-note").textContent = result.body
    ? `submitted ${result.body.request_id}; approvers alerted: ` +
      result.body.alert_targets.join(", ")
    : `refused: ${result.error?.code}: ${result.error?.message}`;
  void refreshTracker();
}

async function onEnterPasscode(event: Event): Promise<void> {
  event.preventDefault();
  const requestId = el<HTMLInputElement>("pc-request").value.trim();
  const code = el<HTMLInputElement>("pc-code").value.trim();
  const result = await gateway.enterPasscode(requestId, code);
  el("pc-note").textContent = result.body
    ? `approved by ${result.body.decider_id} via passcode`
    : `refused: ${result.error?.code}`;
  void refreshTracker();
}

function startUserView(): void {
  el<HTMLFormElement>("submit-form").onsubmit = onSubmitRequest;
  el<HTMLFormElement>("passcode-form").onsubmit = onEnterPasscode;
  setInterval(refreshTracker, 1000);
  setInterval(renderTracker, 250);     // countdown ticks between polls
  void refreshTracker();
}

el<HTMLFormElement>("login-form").onsubmit = onLogin;
