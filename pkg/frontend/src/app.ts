/**
 * Browser entry: wires the review session and dashboard into the DOM.
 * Served as a static bundle by the annotation service.
 */

import { QueueApi, type Decision } from "./api.js";
import { loadDashboard } from "./dashboard.js";
import { decisionForKey, shouldHandleKey } from "./keyboard.js";
import { ReviewSession } from "./queue.js";

const DECISION_LABELS: Record<Decision, string> = {
  yes: "1 · Oui",
  maybe_yes: "2 · Plutôt oui",
  maybe_no: "3 · Plutôt non",
  no: "4 · Non",
};

function annotatorId(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("annotator");
  if (fromQuery) {
    window.localStorage.setItem("annotator", fromQuery);
    return fromQuery;
  }
  let stored = window.localStorage.getItem("annotator");
  if (!stored) {
    stored = window.prompt("Identifiant annotateur ?") || `annot-${Date.now() % 10000}`;
    window.localStorage.setItem("annotator", stored);
  }
  return stored;
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function render(root: HTMLElement, session: ReviewSession, api: QueueApi): void {
  const state = session.state;
  root.replaceChildren();

  const header = el("header", "header");
  header.append(el("h1", "title", "File de vérification"));
  header.append(el("span", "annotator", api.annotator));
  root.append(header);

  if (state.retryBanner) {
    const banner = el("div", "banner error", "Service injoignable — ");
    const retry = el("button", "retry", "réessayer");
    retry.onclick = () => session.fetchNext().then(() => render(root, session, api));
    banner.append(retry);
    root.append(banner);
  }

  if (state.pending.length > 0) {
    root.append(
      el("div", "banner pending", `${state.pending.length} décision(s) en attente d'envoi`),
    );
  }

  if (state.breakDue) {
    const banner = el("div", "banner break",
      "Pensez à faire une pause — 25 messages relus. ");
    const ok = el("button", "ack", "continuer");
    ok.onclick = () => {
      session.acknowledgeBreak();
      render(root, session, api);
    };
    banner.append(ok);
    root.append(banner);
  }

  if (state.phase === "empty") {
    root.append(el("p", "empty", "File vide — rien à relire. Merci !"));
    return;
  }
  if (state.phase === "loading") {
    root.append(el("p", "loading", "Chargement…"));
    return;
  }

  const item = state.item;
  if (item) {
    const card = el("section", "card");
    const textBlock = el("blockquote", state.revealed ? "comment" : "comment blurred",
      item.text);
    if (!state.revealed) {
      textBlock.title = "Contenu potentiellement sensible — cliquer pour afficher";
      textBlock.onclick = () => {
        session.reveal();
        render(root, session, api);
      };
    }
    card.append(textBlock);

    const analysis = el("div", "analysis");
    analysis.append(el("p", "summary", `Résumé : ${item.summary}`));
    analysis.append(
      el("p", "tones",
        `Tons : ${item.tones.map(([name, pct]) => `${name} (${pct}%)`).join(", ") || "—"}`),
    );
    analysis.append(el("p", "score",
      `Score du pré-annotateur : ${item.score}/10 — ${item.justification}`));
    card.append(analysis);

    const buttons = el("div", "decisions");
    (Object.keys(DECISION_LABELS) as Decision[]).forEach((decision) => {
      const button = el("button", `decision ${decision}`, DECISION_LABELS[decision]);
      button.onclick = () => session.submit(decision).then(() => render(root, session, api));
      buttons.append(button);
    });
    card.append(buttons);

    if (state.inlineError) {
      card.append(el("p", "inline-error", `Envoi refusé : ${state.inlineError}`));
    }
    root.append(card);
  }

  const dashboard = el("section", "dashboard");
  dashboard.append(el("h2", "subtitle", "Avancement"));
  const progressHost = el("div", "progress", "…");
  dashboard.append(progressHost);
  root.append(dashboard);

  loadDashboard(api).then((data) => {
    progressHost.textContent =
      `${data.progress.labeled}/${data.progress.total} étiquetés ` +
      `(${data.progress.percentDone.toFixed(0)}%) — ${data.progress.remaining} en attente`;
  }).catch(() => {
    progressHost.textContent = "statistiques indisponibles";
  });
}

export function start(): void {
  const root = document.getElementById("app");
  if (!root) return;
  const api = new QueueApi("", annotatorId());
  const session = new ReviewSession(api);

  window.addEventListener("keydown", (event) => {
    if (!shouldHandleKey(event.key, event.target as HTMLElement | null, event)) return;
    const decision = decisionForKey(event.key);
    if (decision) {
      event.preventDefault();
      void session.submit(decision).then(() => render(root, session, api));
    }
  });

  window.addEventListener("online", () => {
    void session.flushPending().then(() => render(root, session, api));
  });

  void session.fetchNext().then(() => render(root, session, api));
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  start();
}
