// Console entry point: create or resume a session, then loop rendering the
// pending query cards and the dashboard until the analyst stops labeling.

import { ApiClient, Label, MetricsPayload, QueryPayload } from "./api";
import { renderQueryBatch } from "./cards";
import { DashboardSections, renderDashboard, renderStalePrompt } from "./dashboard";

const params = new URLSearchParams(window.location.search);
const client = new ApiClient(params.get("api") ?? "http://127.0.0.1:8765");

const cardsContainer = document.getElementById("cards") as HTMLElement;
const sections: DashboardSections = {
    counter: document.getElementById("counter") as HTMLElement,
    curve: document.getElementById("curve") as HTMLElement,
    drift: document.getElementById("drift") as HTMLElement,
    scatter: document.getElementById("scatter") as HTMLElement,
};

let sessionId: string | null = params.get("session");

const emptyMetrics: MetricsPayload = {
    queries_spent: 0, cum_anomalies: 0, curve: [],
    top_instances: [], weight_hash: "", drift_report: [],
};

function featurePair(): [number, number] {
    const fx = Number(params.get("fx") ?? 0);
    const fy = Number(params.get("fy") ?? 1);
    return [fx, fy];
}

function show(queries: QueryPayload[], metrics: MetricsPayload): void {
    renderQueryBatch(cardsContainer, queries, submitLabel);
    const [fx, fy] = featurePair();
    renderDashboard(sections, metrics, queries, fx, fy);
}

async function submitLabel(instanceId: number, label: Label): Promise<void> {
    if (!sessionId) throw new Error("no active session");
    const response = await client.submitLabel(sessionId, instanceId, label);
    show(response.queries, response.metrics);
}

async function start(): Promise<void> {
    try {
        if (sessionId) {
            const [state, metrics] = await Promise.all([
                client.getQueries(sessionId), client.getMetrics(sessionId)]);
            show(state.queries, metrics);
            return;
        }
        const config = {
            dataset: { synth: { n: 500, dim: 2, anomaly_rate: 0.05, seed: 7 } },
            n_trees: 50, subsample: 128, batch: 3,
            strategy: params.get("strategy") ?? "top",
            seed: 0,
        };
        const created = await client.createSession(config);
        sessionId = created.session_id;
        const url = new URL(window.location.href);
        url.searchParams.set("session", sessionId);
        history.replaceState(null, "", url);
        show(created.queries, emptyMetrics);
    } catch {
        renderStalePrompt(cardsContainer);
    }
}

start();
